//! Kinematic motion, wall sliding, holding and pushing.

use super::{ActionCommand, AgentId, ArenaConfig, EntityId, EntityKind, EnvKind, WorldState};
use crate::geometry::{wrap_angle, Rect, Vec2};
use serde::{Deserialize, Serialize};

/// A held task object touching another task object during this step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContactEvent {
    pub agent: AgentId,
    pub held: EntityId,
    pub other: EntityId,
}

/// Moves a disc of radius `r` from `p` by `delta`, one axis at a time,
/// stopping flush against the arena boundary and any wall.
pub(crate) fn slide(arena: &ArenaConfig, walls: &[Rect], p: Vec2, delta: Vec2, r: f64) -> Vec2 {
    let expanded: Vec<Rect> = walls.iter().map(|w| w.expanded(r)).collect();
    let x = sweep(p.x, delta.x, p.y, r, arena.width - r, &expanded, true);
    let y = sweep(p.y, delta.y, x, r, arena.height - r, &expanded, false);
    Vec2::new(x, y)
}

fn sweep(from: f64, d: f64, other: f64, lo: f64, hi: f64, walls: &[Rect], along_x: bool) -> f64 {
    if d == 0.0 {
        return from;
    }
    let mut to = (from + d).clamp(lo, hi.max(lo));
    for w in walls {
        let (amin, amax, omin, omax) = if along_x {
            (w.min.x, w.max.x, w.min.y, w.max.y)
        } else {
            (w.min.y, w.max.y, w.min.x, w.max.x)
        };
        if other <= omin || other >= omax {
            continue;
        }
        if d > 0.0 && from <= amin && to > amin {
            to = amin;
        } else if d < 0.0 && from >= amax && to < amax {
            to = amax;
        }
    }
    to
}

/// Position of an object held at `offset` in front of `holder`, pulled back
/// toward the holder until it is clear of walls.
pub(crate) fn hold_position(arena: &ArenaConfig, holder: Vec2, heading: f64, offset: f64) -> Vec2 {
    let dir = Vec2::from_angle(heading);
    let r = arena.object_radius;
    let mut s = offset;
    loop {
        let p = holder + dir * s;
        if arena.is_free(p, r) || s <= 0.0 {
            return if s <= 0.0 { holder } else { p };
        }
        s = (s - 1.0).max(0.0);
    }
}

/// Advances every agent by its command and updates held objects, pushed
/// objects and pressure plates. Commands for absent agents are ignored;
/// agents without a command stand still. Returns contacts between held
/// objects and other task objects, each unordered pair at most once.
pub fn advance_physics(
    state: &mut WorldState,
    commands: &[(AgentId, ActionCommand)],
) -> Vec<ContactEvent> {
    let arena = state.arena.clone();
    let walls = arena.walls();

    for agent in state.agents.iter_mut() {
        let cmd = commands
            .iter()
            .find(|(id, _)| *id == agent.id)
            .map(|(_, c)| c.clamped())
            .unwrap_or(ActionCommand::NULL);
        agent.heading = wrap_angle(agent.heading + cmd.turn * arena.theta_max);
        let delta = Vec2::from_angle(agent.heading) * (cmd.forward * arena.v_max);
        agent.pos = slide(&arena, &walls, agent.pos, delta, arena.agent_radius);
    }

    // Held objects follow their holders.
    for i in 0..state.agents.len() {
        let (pos, heading, held) = {
            let a = &state.agents[i];
            (a.pos, a.heading, a.held)
        };
        if let Some(h) = held {
            let p = hold_position(&arena, pos, heading, arena.hold_offset());
            if let Some(e) = state.entity_mut(h) {
                e.pos = p;
            }
        }
    }

    // Contacts between held objects and other task objects.
    let mut contacts: Vec<ContactEvent> = Vec::new();
    let contact = arena.contact_distance();
    for held in state
        .entities
        .iter()
        .filter(|e| e.is_task() && e.held_by.is_some())
    {
        for other in state
            .entities
            .iter()
            .filter(|e| e.is_task() && e.id != held.id)
        {
            if held.pos.distance(other.pos) > contact {
                continue;
            }
            let dup = contacts.iter().any(|c| {
                (c.held == other.id && c.other == held.id)
                    || (c.held == held.id && c.other == other.id)
            });
            if !dup {
                contacts.push(ContactEvent {
                    agent: held.held_by.unwrap(),
                    held: held.id,
                    other: other.id,
                });
            }
        }
    }

    // Free task objects are pushed out of agents and held objects.
    let pushers: Vec<(Vec2, f64, f64)> = state
        .agents
        .iter()
        .map(|a| (a.pos, arena.agent_radius, a.heading))
        .chain(
            state
                .entities
                .iter()
                .filter(|e| e.held_by.is_some())
                .map(|e| {
                    let heading = state
                        .agents
                        .iter()
                        .find(|a| Some(a.id) == e.held_by)
                        .map_or(0.0, |a| a.heading);
                    (e.pos, arena.object_radius, heading)
                }),
        )
        .collect();
    for e in state
        .entities
        .iter_mut()
        .filter(|e| e.is_task() && e.held_by.is_none())
    {
        for &(p, r, heading) in &pushers {
            let min = r + arena.object_radius;
            let d = e.pos - p;
            let dist = d.length();
            if dist >= min {
                continue;
            }
            let dir = d.normalized().unwrap_or_else(|| Vec2::from_angle(heading));
            let target = p + dir * min;
            e.pos = slide(&arena, &walls, e.pos, target - e.pos, arena.object_radius);
        }
    }

    update_plates(state);
    contacts
}

pub(crate) fn update_plates(state: &mut WorldState) {
    let r = state.arena.plate_radius;
    let agents: Vec<Vec2> = state.agents.iter().map(|a| a.pos).collect();
    for e in state.entities.iter_mut() {
        if e.kind == EntityKind::Env(EnvKind::PressurePlate) {
            e.active = agents.iter().any(|&a| a.distance(e.pos) <= r);
        }
    }
}

/// The free task object an empty-handed agent would pick up: the nearest
/// in reach, lowest id on ties.
pub fn grasp_target(state: &WorldState, agent_id: AgentId) -> Option<EntityId> {
    let agent = state.agent(agent_id)?;
    let reach = state.arena.reach;
    state
        .entities
        .iter()
        .filter(|e| e.is_task() && e.held_by.is_none())
        .map(|e| (e.pos.distance(agent.pos), e.id))
        .filter(|(d, _)| *d <= reach)
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id)| id)
}

/// Hold-to-keep grasping: a raised flag with an empty hand picks up the
/// nearest free task object in reach (lowest id on ties); a lowered flag
/// releases whatever is held where it is.
pub fn resolve_grasp(state: &mut WorldState, agent_id: AgentId, grasp: bool) {
    let Some(agent) = state.agent(agent_id).cloned() else {
        return;
    };
    match (grasp, agent.held) {
        (true, None) => {
            if let Some(id) = grasp_target(state, agent_id) {
                let p = hold_position(
                    &state.arena,
                    agent.pos,
                    agent.heading,
                    state.arena.hold_offset(),
                );
                let e = state.entity_mut(id).unwrap();
                e.held_by = Some(agent_id);
                e.pos = p;
                state.agent_mut(agent_id).unwrap().held = Some(id);
            }
        }
        (false, Some(id)) => {
            if let Some(e) = state.entity_mut(id) {
                e.held_by = None;
            }
            state.agent_mut(agent_id).unwrap().held = None;
        }
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{AgentBody, Color, ObjectSpec, Shape};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn world_with_agents(positions: &[(f64, f64, f64)]) -> WorldState {
        let mut w = WorldState::new(ArenaConfig::default());
        for (i, &(x, y, h)) in positions.iter().enumerate() {
            w.agents.push(AgentBody {
                id: AgentId(i as u8),
                pos: Vec2::new(x, y),
                heading: h,
                held: None,
            });
        }
        w
    }

    fn forward(turn: f64, forward: f64) -> ActionCommand {
        ActionCommand {
            turn,
            forward,
            grasp: false,
            activate: false,
        }
    }

    const SPEC: ObjectSpec = ObjectSpec::new(Shape::Circle, Color::Red);

    #[test]
    fn free_space_motion_advances_exactly_v_max() {
        let mut w = world_with_agents(&[(80.0, 80.0, 0.3)]);
        advance_physics(&mut w, &[(AgentId(0), forward(0.0, 1.0))]);
        let a = &w.agents[0];
        assert!((a.pos.distance(Vec2::new(80.0, 80.0)) - 6.0).abs() < 1e-12);
        assert_eq!(a.heading, 0.3);
    }

    #[test]
    fn turning_applies_theta_max() {
        let mut w = world_with_agents(&[(80.0, 80.0, 0.0)]);
        advance_physics(&mut w, &[(AgentId(0), forward(-1.0, 0.0))]);
        assert!((w.agents[0].heading - (2.0 * PI - PI / 8.0)).abs() < 1e-12);
    }

    #[test]
    fn wall_collision_is_flush() {
        // The interior vertical wall's left face is at x=156; agent radius 8.
        let mut w = world_with_agents(&[(144.0, 130.0, 0.0)]);
        advance_physics(&mut w, &[(AgentId(0), forward(0.0, 1.0))]);
        assert_eq!(w.agents[0].pos.x, 148.0);
        advance_physics(&mut w, &[(AgentId(0), forward(0.0, 1.0))]);
        assert_eq!(w.agents[0].pos.x, 148.0);
        // Outer boundary.
        let mut w = world_with_agents(&[(12.0, 30.0, PI)]);
        advance_physics(&mut w, &[(AgentId(0), forward(0.0, 1.0))]);
        assert_eq!(w.agents[0].pos.x, 8.0);
    }

    #[test]
    fn sliding_along_a_wall() {
        let mut w = world_with_agents(&[(148.0, 130.0, PI / 4.0)]);
        advance_physics(&mut w, &[(AgentId(0), forward(0.0, 1.0))]);
        let a = &w.agents[0];
        assert_eq!(a.pos.x, 148.0);
        assert!(a.pos.y > 130.0);
    }

    #[test]
    fn agents_pass_through_each_other() {
        let mut w = world_with_agents(&[(100.0, 80.0, 0.0), (112.0, 80.0, PI)]);
        advance_physics(
            &mut w,
            &[
                (AgentId(0), forward(0.0, 1.0)),
                (AgentId(1), forward(0.0, 1.0)),
            ],
        );
        assert!(w.agents[0].pos.distance(w.agents[1].pos) < 1e-9);
    }

    #[test]
    fn doorway_is_passable() {
        let mut w = world_with_agents(&[(120.0, 80.0, 0.0)]);
        for _ in 0..20 {
            advance_physics(&mut w, &[(AgentId(0), forward(0.0, 1.0))]);
        }
        assert!(w.agents[0].pos.x > 200.0);
    }

    #[test]
    fn grasp_nearest_and_release() {
        let mut w = world_with_agents(&[(80.0, 80.0, 0.0), (200.0, 200.0, 0.0)]);
        let far = w.spawn(EntityKind::Task(SPEC), Vec2::new(98.0, 80.0));
        let near = w.spawn(EntityKind::Task(SPEC), Vec2::new(80.0, 95.0));
        resolve_grasp(&mut w, AgentId(0), true);
        assert_eq!(w.agents[0].held, Some(near));
        assert_eq!(w.entity(near).unwrap().held_by, Some(AgentId(0)));
        // Holding again changes nothing.
        resolve_grasp(&mut w, AgentId(0), true);
        assert_eq!(w.agents[0].held, Some(near));
        resolve_grasp(&mut w, AgentId(0), false);
        assert_eq!(w.agents[0].held, None);
        assert_eq!(w.entity(near).unwrap().held_by, None);
        assert!(w.entity(far).unwrap().held_by.is_none());
    }

    #[test]
    fn cannot_grasp_object_held_by_other_agent() {
        let mut w = world_with_agents(&[(80.0, 80.0, 0.0), (100.0, 80.0, PI)]);
        let obj = w.spawn(EntityKind::Task(SPEC), Vec2::new(90.0, 80.0));
        resolve_grasp(&mut w, AgentId(1), true);
        assert_eq!(w.entity(obj).unwrap().held_by, Some(AgentId(1)));
        let before = w.clone();
        resolve_grasp(&mut w, AgentId(0), true);
        assert_eq!(w, before);
    }

    #[test]
    fn out_of_reach_grasp_is_noop() {
        let mut w = world_with_agents(&[(80.0, 80.0, 0.0)]);
        w.spawn(EntityKind::Task(SPEC), Vec2::new(101.0, 80.0));
        resolve_grasp(&mut w, AgentId(0), true);
        assert_eq!(w.agents[0].held, None);
    }

    #[test]
    fn held_object_follows_and_never_enters_walls() {
        let mut w = world_with_agents(&[(130.0, 130.0, 0.0)]);
        let obj = w.spawn(EntityKind::Task(SPEC), Vec2::new(140.0, 130.0));
        resolve_grasp(&mut w, AgentId(0), true);
        for _ in 0..10 {
            advance_physics(&mut w, &[(AgentId(0), forward(0.0, 1.0))]);
            let e = w.entity(obj).unwrap();
            assert!(w.arena.is_free(e.pos, w.arena.object_radius));
        }
        assert_eq!(w.agents[0].pos.x, 148.0);
    }

    #[test]
    fn pushing_separates_free_objects() {
        let mut w = world_with_agents(&[(80.0, 80.0, 0.0)]);
        let obj = w.spawn(EntityKind::Task(SPEC), Vec2::new(94.0, 80.0));
        advance_physics(&mut w, &[(AgentId(0), forward(0.0, 1.0))]);
        let d = w.entity(obj).unwrap().pos.distance(w.agents[0].pos);
        assert!((d - 14.0).abs() < 1e-9);
        assert_eq!(w.entities.len(), 1);
    }

    #[test]
    fn contact_reported_once_per_pair() {
        let mut w = world_with_agents(&[(80.0, 80.0, 0.0), (120.0, 80.0, PI)]);
        let a = w.spawn(EntityKind::Task(SPEC), Vec2::new(94.0, 80.0));
        let b = w.spawn(EntityKind::Task(SPEC), Vec2::new(106.0, 80.0));
        resolve_grasp(&mut w, AgentId(0), true);
        resolve_grasp(&mut w, AgentId(1), true);
        assert_eq!(w.agents[0].held, Some(a));
        assert_eq!(w.agents[1].held, Some(b));
        let contacts = advance_physics(&mut w, &[]);
        assert_eq!(contacts.len(), 1);
    }

    #[test]
    fn plate_active_only_while_occupied() {
        let mut w = world_with_agents(&[(80.0, 80.0, 0.0)]);
        let plate = w.spawn(
            EntityKind::Env(EnvKind::PressurePlate),
            Vec2::new(90.0, 80.0),
        );
        advance_physics(&mut w, &[]);
        assert!(w.entity(plate).unwrap().active);
        for _ in 0..5 {
            advance_physics(&mut w, &[(AgentId(0), forward(0.0, 1.0))]);
        }
        assert!(!w.entity(plate).unwrap().active);
    }

    fn arb_command() -> impl Strategy<Value = ActionCommand> {
        (-2.0f64..2.0, -1.0f64..2.0, any::<bool>(), any::<bool>()).prop_map(|(t, f, g, a)| {
            ActionCommand {
                turn: t,
                forward: f,
                grasp: g,
                activate: a,
            }
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn physics_invariants(
            cmds in proptest::collection::vec((arb_command(), arb_command()), 1..150),
            objs in proptest::collection::vec((20.0f64..300.0, 20.0f64..300.0), 0..8),
        ) {
            let mut w = world_with_agents(&[(60.0, 60.0, 0.0), (260.0, 260.0, 1.0)]);
            for (x, y) in objs {
                let p = Vec2::new(x, y);
                if w.arena.is_free(p, 6.0) {
                    w.spawn(EntityKind::Task(SPEC), p);
                }
            }
            let n = w.entities.len();
            for (c0, c1) in cmds {
                let mut twin = w.clone();
                let cmds = [(AgentId(0), c0), (AgentId(1), c1)];
                let k1 = advance_physics(&mut w, &cmds);
                let k2 = advance_physics(&mut twin, &cmds);
                // Determinism.
                prop_assert_eq!(&w, &twin);
                prop_assert_eq!(k1, k2);
                resolve_grasp(&mut w, AgentId(0), c0.grasp);
                resolve_grasp(&mut w, AgentId(1), c1.grasp);
                // Conservation.
                prop_assert_eq!(w.entities.len(), n);
                let walls = w.arena.walls();
                for a in &w.agents {
                    prop_assert!(w.arena.is_free(a.pos, w.arena.agent_radius));
                    prop_assert!(!walls.iter().any(|r| r.contains_strict(a.pos)));
                }
                for e in &w.entities {
                    prop_assert!(!walls.iter().any(|r| r.contains_strict(e.pos)));
                    prop_assert!(e.pos.x >= 0.0 && e.pos.x <= 320.0 && e.pos.y >= 0.0 && e.pos.y <= 320.0);
                }
                // Hold exclusivity.
                for a in &w.agents {
                    if let Some(h) = a.held {
                        prop_assert_eq!(w.entity(h).unwrap().held_by, Some(a.id));
                    }
                }
                for e in &w.entities {
                    if let Some(h) = e.held_by {
                        prop_assert_eq!(w.agent(h).unwrap().held, Some(e.id));
                    }
                }
            }
        }
    }
}
