//! Turns a task tree into a starting world and its interaction table.

use super::{TaskTree, TaskType};
use crate::geometry::Vec2;
use crate::world::{
    pair_key, ActivateOutcome, AgentBody, AgentId, ArenaConfig, EntityKind, EnvKind,
    InteractionTable, MachineOutcome, PairOutcome, Rule, WorldState,
};
use crate::{Error, Result};
use rand::Rng;
use std::f64::consts::TAU;

const MAX_TRIES: usize = 5000;
const ENV_SPACING: f64 = 40.0;
const GAP: f64 = 2.0;

/// Builds the initial world for `tree` with the given agents.
///
/// Environment objects are placed along the arena edge; task objects and
/// agents at free interior positions that do not overlap.
pub fn materialize<R: Rng>(
    tree: &TaskTree,
    rng: &mut R,
    arena: &ArenaConfig,
    agents: &[AgentId],
) -> Result<(WorldState, InteractionTable)> {
    tree.validate()?;
    let mut world = WorldState::new(arena.clone());

    let mut machine_placed = [false; 2];
    for st in &tree.subtasks {
        let stage = st.stage;
        match st.task {
            TaskType::ActivateLandmarks | TaskType::ForcedLandmarks => {
                for i in 0..st.params.landmarks as usize {
                    let p = edge_position(&world, rng)?;
                    let id = world.spawn(EntityKind::Env(EnvKind::Landmark), p);
                    let e = world.entity_mut(id).unwrap();
                    e.stage = Some(stage);
                    e.assigned = st.params.roles.map(|r| r[i]);
                }
            }
            TaskType::MeetingPoint => {
                let p = edge_position(&world, rng)?;
                let id = world.spawn(EntityKind::Env(EnvKind::MeetingLandmark), p);
                world.entity_mut(id).unwrap().stage = Some(stage);
            }
            TaskType::InOutMachine | TaskType::DropOffPoint => {
                let (slot, kind) = if st.task == TaskType::InOutMachine {
                    (0, EnvKind::InOutMachine)
                } else {
                    (1, EnvKind::DropOffPoint)
                };
                if !machine_placed[slot] {
                    machine_placed[slot] = true;
                    let p = edge_position(&world, rng)?;
                    world.spawn(EntityKind::Env(kind), p);
                }
            }
            _ => {}
        }
        if st.params.plate_gated
            && !world
                .entities
                .iter()
                .any(|e| e.kind == EntityKind::Env(EnvKind::PressurePlate))
        {
            let p = edge_position(&world, rng)?;
            world.spawn(EntityKind::Env(EnvKind::PressurePlate), p);
        }
    }

    let mut bodies: Vec<(Vec2, f64)> = Vec::new();
    for (spec, count) in &tree.initial_spawn {
        for _ in 0..*count {
            let p = interior_position(&world, &bodies, arena.object_radius, rng)?;
            bodies.push((p, arena.object_radius));
            world.spawn(EntityKind::Task(*spec), p);
        }
    }
    for &id in agents {
        let p = interior_position(&world, &bodies, arena.agent_radius, rng)?;
        bodies.push((p, arena.agent_radius));
        world.agents.push(AgentBody {
            id,
            pos: p,
            heading: rng.gen_range(0.0..TAU),
            held: None,
        });
    }
    crate::world::update_plates(&mut world);
    Ok((world, interaction_table(tree)))
}

/// The transformations a tree needs, each owned by its stage.
pub fn interaction_table(tree: &TaskTree) -> InteractionTable {
    let mut table = InteractionTable {
        active_stage: Some(1),
        ..Default::default()
    };
    for st in &tree.subtasks {
        let s = st.stage;
        let gate = |mut r: Rule<MachineOutcome>| {
            r.needs_plate = st.params.plate_gated;
            r
        };
        match st.task {
            TaskType::CraftSpawn => {
                let p = st.product.expect("validated");
                table.pairs.insert(
                    pair_key(st.inputs[0], st.inputs[1]),
                    Rule::new(PairOutcome::Spawn(p), s),
                );
            }
            TaskType::CraftDespawn => {
                table.pairs.insert(
                    pair_key(st.inputs[0], st.inputs[1]),
                    Rule::new(PairOutcome::DespawnBoth, s),
                );
            }
            TaskType::InOutMachine => {
                let p = st.product.expect("validated");
                table.machines.insert(
                    (EnvKind::InOutMachine, st.inputs[0]),
                    gate(Rule::new(MachineOutcome::SwitchTo(p), s)),
                );
            }
            TaskType::DropOffPoint => {
                table.machines.insert(
                    (EnvKind::DropOffPoint, st.inputs[0]),
                    gate(Rule::new(MachineOutcome::Consume, s)),
                );
            }
            TaskType::LemonHunt | TaskType::ForcedLemonHunt => {
                let lemon = st.params.lemon.expect("validated");
                let mut switch = Rule::new(ActivateOutcome::Become(lemon), s);
                let mut consume = Rule::new(ActivateOutcome::Consume, s);
                if let Some([a, b]) = st.params.roles {
                    switch.actor = Some(a);
                    consume.actor = Some(b);
                }
                table.activations.insert(st.inputs[0], switch);
                table.activations.insert(lemon, consume);
            }
            TaskType::ActivateLandmarks | TaskType::ForcedLandmarks | TaskType::MeetingPoint => {}
        }
    }
    table
}

/// Uniform point on the inset perimeter, clear of walls and other
/// environment objects.
fn edge_position<R: Rng>(world: &WorldState, rng: &mut R) -> Result<Vec2> {
    let a = &world.arena;
    let i = a.edge_inset;
    let (w, h) = (a.width - 2.0 * i, a.height - 2.0 * i);
    let total = 2.0 * (w + h);
    for _ in 0..MAX_TRIES {
        let mut u = rng.gen_range(0.0..total);
        let p = if u < w {
            Vec2::new(i + u, i)
        } else {
            u -= w;
            if u < h {
                Vec2::new(a.width - i, i + u)
            } else {
                u -= h;
                if u < w {
                    Vec2::new(a.width - i - u, a.height - i)
                } else {
                    Vec2::new(i, a.height - i - (u - w))
                }
            }
        };
        let clear = a.is_free(p, a.env_radius + GAP)
            && world
                .entities
                .iter()
                .all(|e| e.pos.distance(p) >= ENV_SPACING);
        if clear {
            return Ok(p);
        }
    }
    Err(Error::Placement(format!(
        "no free edge position after {MAX_TRIES} tries ({} objects placed)",
        world.entities.len()
    )))
}

fn interior_position<R: Rng>(
    world: &WorldState,
    bodies: &[(Vec2, f64)],
    r: f64,
    rng: &mut R,
) -> Result<Vec2> {
    let a = &world.arena;
    let m = r + GAP;
    for _ in 0..MAX_TRIES {
        let p = Vec2::new(
            rng.gen_range(m..a.width - m),
            rng.gen_range(m..a.height - m),
        );
        let clear = a.is_free(p, r + GAP)
            && bodies.iter().all(|(q, rq)| q.distance(p) >= r + rq + GAP)
            && world
                .entities
                .iter()
                .filter(|e| !e.is_task())
                .all(|e| e.pos.distance(p) >= a.env_radius + r + 2.0 * GAP);
        if clear {
            return Ok(p);
        }
    }
    Err(Error::Placement(format!(
        "no free interior position of radius {r} after {MAX_TRIES} tries"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Domain, SeedStream};
    use crate::task::sample_task_tree;
    use crate::world::ObjectPool;

    fn build(seed: u64, depth: usize) -> (TaskTree, WorldState, InteractionTable) {
        let tree = sample_task_tree(seed, depth, false, &ObjectPool::Training.specs()).unwrap();
        let mut rng = SeedStream::new(seed).rng(Domain::Placement, 0);
        let (w, t) = materialize(
            &tree,
            &mut rng,
            &ArenaConfig::default(),
            &[AgentId(0), AgentId(1)],
        )
        .unwrap();
        (tree, w, t)
    }

    #[test]
    fn placement_is_valid() {
        for seed in 0..300 {
            let (tree, w, table) = build(seed, 1 + (seed as usize % 6));
            let a = &w.arena;
            // One machine of each kind at most, all environment objects on
            // the edge track.
            for kind in [EnvKind::InOutMachine, EnvKind::DropOffPoint] {
                let n = w
                    .entities
                    .iter()
                    .filter(|e| e.kind == EntityKind::Env(kind))
                    .count();
                assert_eq!(n, tree.needs_env(kind) as usize);
            }
            for e in w.entities.iter().filter(|e| !e.is_task()) {
                let off_x = (e.pos.x - a.edge_inset)
                    .abs()
                    .min((e.pos.x - (a.width - a.edge_inset)).abs());
                let off_y = (e.pos.y - a.edge_inset)
                    .abs()
                    .min((e.pos.y - (a.height - a.edge_inset)).abs());
                assert!(off_x < 1e-9 || off_y < 1e-9, "{:?}", e.pos);
                assert!(a.is_free(e.pos, a.env_radius));
            }
            for (spec, n) in &tree.initial_spawn {
                assert_eq!(w.count_spec(*spec), *n as usize);
            }
            for e in w.entities.iter().filter(|e| e.is_task()) {
                assert!(a.is_free(e.pos, a.object_radius));
                for o in w.entities.iter().filter(|o| o.is_task() && o.id != e.id) {
                    assert!(e.pos.distance(o.pos) >= 2.0 * a.object_radius);
                }
            }
            assert_eq!(w.agents.len(), 2);
            assert_eq!(table.active_stage, Some(1));
        }
    }

    #[test]
    fn stage_one_inputs_present() {
        for seed in 0..200 {
            let (tree, w, _) = build(seed, 3);
            for s in &tree.subtasks[0].inputs {
                assert!(w.count_spec(*s) >= 1);
            }
        }
    }

    #[test]
    fn same_seed_same_world() {
        assert_eq!(build(9, 3).1, build(9, 3).1);
    }

    #[test]
    fn table_covers_only_tree_specs() {
        for seed in 0..200 {
            let (tree, _, table) = build(seed, 4);
            let specs = tree.specs();
            for (a, b) in table.pairs.keys() {
                assert!(specs.contains(a) && specs.contains(b));
            }
            for s in table.activations.keys() {
                assert!(specs.contains(s));
            }
            for (_, s) in table.machines.keys() {
                assert!(specs.contains(s));
            }
            let expected: usize = tree
                .subtasks
                .iter()
                .map(|st| match st.task {
                    TaskType::LemonHunt | TaskType::ForcedLemonHunt => 2,
                    t if t.is_landmark() => 0,
                    _ => 1,
                })
                .sum();
            assert_eq!(
                table.pairs.len() + table.activations.len() + table.machines.len(),
                expected
            );
        }
    }
}
