//! Brute-force explorer. It sees every entity but not the task tree, and
//! works through landmarks, activations, deliveries and pairings, trying
//! each combination at most once per episode across both agents.

use super::nav::navigate_within;
use super::planner::{activate, held, hold, idle, pos, push_into};
use crate::episode::{Episode, EpisodeConfig, WorldSlot};
use crate::reward::EpisodeOutcome;
use crate::world::{
    grasp_target, ActionCommand, AgentId, EntityId, EntityKind, EnvKind, ObjectSpec, WorldState,
};
use crate::Result;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// An object as the explorer tracks it: machines change an object's spec
/// in place, which makes it a new candidate.
pub type ObjectKey = (EntityId, ObjectSpec);

/// Steps before an unfinished attempt is abandoned.
const ATTEMPT_BUDGET: u64 = 300;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Job {
    Landmark(EntityId),
    Activate(ObjectKey),
    Deliver(ObjectKey, EntityId),
    Pair(ObjectKey, ObjectKey),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pairing {
    pub world: usize,
    pub t: u64,
    pub agent: AgentId,
    pub first: ObjectKey,
    pub second: ObjectKey,
}

#[derive(Clone, Debug, Default)]
struct SlotMemory {
    landmarks: BTreeSet<EntityId>,
    activated: BTreeSet<ObjectKey>,
    delivered: BTreeSet<(ObjectKey, EntityId)>,
    paired: BTreeSet<(ObjectKey, ObjectKey)>,
    jobs: Vec<Option<(Job, u64)>>,
    /// Highest entity id present when the episode started.
    initial: Option<EntityId>,
    signature: Vec<(EntityId, EntityKind, bool)>,
}

#[derive(Clone, Debug, Default)]
pub struct Explorer {
    memory: Vec<SlotMemory>,
    log: Vec<Pairing>,
}

fn key_of(w: &WorldState, id: EntityId) -> Option<ObjectKey> {
    w.entity(id)
        .and_then(|e| e.kind.task_spec().map(|s| (id, s)))
}

fn exists(w: &WorldState, k: ObjectKey) -> bool {
    key_of(w, k.0) == Some(k)
}

fn unordered(a: ObjectKey, b: ObjectKey) -> (ObjectKey, ObjectKey) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Picks up `id`, dropping anything else first. `None` once held.
fn fetch_id(w: &WorldState, a: AgentId, id: EntityId) -> Option<ActionCommand> {
    if let Some(h) = held(w, a) {
        return (h.id != id).then_some(ActionCommand::NULL);
    }
    let target = w.entity(id)?;
    if grasp_target(w, a) == Some(id) {
        return Some(hold(ActionCommand::NULL));
    }
    Some(navigate_within(w, a, target.pos, 0.0))
}

impl Explorer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every pairing attempted so far, in the order they were started.
    pub fn pairing_log(&self) -> &[Pairing] {
        &self.log
    }

    pub fn act(&mut self, ep: &Episode) -> [ActionCommand; 2] {
        let mut out = [ActionCommand::NULL; 2];
        if self.memory.len() != ep.slots().len() {
            self.memory = vec![SlotMemory::default(); ep.slots().len()];
        }
        for (k, slot) in ep.slots().iter().enumerate() {
            for (i, &a) in slot.agents.iter().enumerate() {
                out[a.index()] = self.act_agent(k, slot, i, a);
            }
        }
        out
    }

    fn act_agent(&mut self, k: usize, slot: &WorldSlot, i: usize, a: AgentId) -> ActionCommand {
        let w = &slot.world;
        let mem = &mut self.memory[k];
        if mem.jobs.len() != slot.agents.len() {
            mem.jobs = vec![None; slot.agents.len()];
        }
        if mem.initial.is_none() {
            mem.initial = w.entities.iter().map(|e| e.id).max();
        }
        // Landmarks may respond later, so they become worth another visit
        // whenever the world changes.
        let signature: Vec<_> = w
            .entities
            .iter()
            .map(|e| (e.id, e.kind, e.is_lit()))
            .collect();
        if signature != mem.signature {
            mem.signature = signature;
            mem.landmarks.clear();
        }
        for _ in 0..2 {
            if let Some((job, started)) = mem.jobs[i] {
                if w.t.saturating_sub(started) <= ATTEMPT_BUDGET {
                    if let Some((c, last)) = run(w, a, job) {
                        if last {
                            mem.jobs[i] = None;
                        }
                        return c;
                    }
                }
                mem.jobs[i] = None;
            }
            let Some(job) = next_job(w, a, mem) else {
                break;
            };
            if let Job::Pair(x, y) = job {
                self.log.push(Pairing {
                    world: k,
                    t: w.t,
                    agent: a,
                    first: x,
                    second: y,
                });
            }
            mem.jobs[i] = Some((job, w.t));
        }
        idle(w, a)
    }
}

/// Claims the next untried combination for `a`. Claims are shared, so the
/// other agent never starts the same one.
fn next_job(w: &WorldState, a: AgentId, mem: &mut SlotMemory) -> Option<Job> {
    let me = pos(w, a);
    let dist = |id: EntityId| w.entity(id).map_or(f64::MAX, |e| e.pos.distance(me));
    let nearest = |ids: Vec<EntityId>| {
        ids.into_iter()
            .min_by(|x, y| dist(*x).total_cmp(&dist(*y)).then(x.cmp(y)))
    };

    let landmarks: Vec<EntityId> = w
        .entities
        .iter()
        .filter(|e| e.kind.env_kind().is_some_and(|k| k.is_landmark()) && !e.is_lit())
        .filter(|e| e.assigned.is_none_or(|x| x == a))
        .map(|e| e.id)
        .filter(|id| !mem.landmarks.contains(id))
        .collect();
    if let Some(id) = nearest(landmarks) {
        mem.landmarks.insert(id);
        return Some(Job::Landmark(id));
    }

    let free: Vec<ObjectKey> = w
        .entities
        .iter()
        .filter(|e| e.held_by.is_none_or(|h| h == a))
        .filter_map(|e| e.kind.task_spec().map(|s| (e.id, s)))
        .collect();

    // Objects that appeared during the episode first: a fresh object is
    // often the one to consume.
    let untried: Vec<EntityId> = free
        .iter()
        .filter(|k| !mem.activated.contains(k))
        .map(|k| k.0)
        .collect();
    let fresh: Vec<EntityId> = untried
        .iter()
        .copied()
        .filter(|id| Some(*id) > mem.initial)
        .collect();
    if let Some(id) = nearest(fresh).or_else(|| nearest(untried)) {
        let key = key_of(w, id)?;
        mem.activated.insert(key);
        return Some(Job::Activate(key));
    }

    let machines: Vec<EntityId> = w
        .entities
        .iter()
        .filter(|e| {
            matches!(
                e.kind,
                EntityKind::Env(EnvKind::InOutMachine | EnvKind::DropOffPoint)
            )
        })
        .map(|e| e.id)
        .collect();
    let mine = held(w, a).and_then(|e| key_of(w, e.id));
    let deliveries = |mem: &SlotMemory, obj: ObjectKey| {
        machines
            .iter()
            .copied()
            .filter(|m| !mem.delivered.contains(&(obj, *m)))
            .collect::<Vec<_>>()
    };
    let order: Vec<ObjectKey> = {
        let mut v = free.clone();
        v.sort_by(|x, y| {
            let hx = Some(*x) != mine;
            let hy = Some(*y) != mine;
            hx.cmp(&hy)
                .then(dist(x.0).total_cmp(&dist(y.0)))
                .then(x.cmp(y))
        });
        v
    };
    for &obj in &order {
        if let Some(m) = nearest(deliveries(mem, obj)) {
            mem.delivered.insert((obj, m));
            return Some(Job::Deliver(obj, m));
        }
    }

    for &obj in &order {
        let partners: Vec<EntityId> = w
            .entities
            .iter()
            .filter_map(|e| e.kind.task_spec().map(|s| (e.id, s)))
            .filter(|p| p.0 != obj.0 && !mem.paired.contains(&unordered(obj, *p)))
            .map(|p| p.0)
            .collect();
        let from = w.entity(obj.0).map_or(me, |e| e.pos);
        let pick = partners
            .into_iter()
            .min_by(|x, y| {
                let d = |id: EntityId| w.entity(id).map_or(f64::MAX, |e| e.pos.distance(from));
                d(*x).total_cmp(&d(*y)).then(x.cmp(y))
            })
            .and_then(|id| key_of(w, id));
        if let Some(p) = pick {
            mem.paired.insert(unordered(obj, p));
            return Some(Job::Pair(obj, p));
        }
    }
    None
}

/// One step of `job` and whether it is the last one; `None` once the job is
/// finished or no longer possible.
fn run(w: &WorldState, a: AgentId, job: Job) -> Option<(ActionCommand, bool)> {
    // Presses happen once; the job ends with the press.
    let press = |id: EntityId| {
        let c = activate(w, a, id);
        (c, c.activate)
    };
    let movable = |k: ObjectKey| {
        exists(w, k)
            && w.entity(k.0)
                .is_some_and(|e| e.held_by.is_none_or(|h| h == a))
    };
    match job {
        Job::Landmark(id) => {
            let e = w.entity(id)?;
            (!e.is_lit()).then(|| press(id))
        }
        Job::Activate(k) => {
            if !movable(k) {
                return None;
            }
            if held(w, a).is_some() {
                return Some((ActionCommand::NULL, false));
            }
            Some(press(k.0))
        }
        Job::Deliver(k, m) => {
            if !movable(k) {
                return None;
            }
            if let Some(c) = fetch_id(w, a, k.0) {
                return Some((c, false));
            }
            Some(press(m))
        }
        Job::Pair(x, y) => {
            if !movable(x) || !exists(w, y) {
                return None;
            }
            if let Some(c) = fetch_id(w, a, x.0) {
                return Some((c, false));
            }
            let (px, py) = (w.entity(x.0)?.pos, w.entity(y.0)?.pos);
            if px.distance(py) <= w.arena.contact_distance() + 0.5 {
                return None;
            }
            Some((push_into(w, a, py), false))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExploreReport {
    /// Outcome of the first world (agent 0's).
    pub success: bool,
    pub steps: u64,
    pub outcomes: Vec<EpisodeOutcome>,
    pub pairings: Vec<Pairing>,
}

/// Runs the explorer with one agent per world or both agents sharing one.
pub fn brute_force_explore(config: &EpisodeConfig, n_agents: usize) -> Result<ExploreReport> {
    let cfg = EpisodeConfig {
        p_multi: if n_agents >= 2 { 1.0 } else { 0.0 },
        terminate_on_success: true,
        ..config.clone()
    };
    let (mut ep, _) = Episode::reset(&cfg)?;
    let mut explorer = Explorer::new();
    while !ep.is_done() {
        let a = explorer.act(&ep);
        ep.step(a)?;
        if ep.slots()[0].progress.is_complete() {
            break;
        }
    }
    let first = &ep.slots()[0].progress;
    let success = first.is_complete();
    let steps = match first.completed_at.last().copied().flatten() {
        Some(t) if success => t + 1,
        _ => ep.t(),
    };
    Ok(ExploreReport {
        success,
        steps,
        outcomes: ep.outcomes(),
        pairings: explorer.log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::TaskType;

    fn find_depth_one(task: &[TaskType], n: usize) -> Vec<EpisodeConfig> {
        let base = EpisodeConfig {
            depth: 1,
            step_limit: 6000,
            ..EpisodeConfig::default()
        };
        (0..2000)
            .map(|s| base.with_seed(s))
            .filter(|c| {
                let (ep, _) = Episode::reset(&EpisodeConfig {
                    p_multi: 0.0,
                    ..c.clone()
                })
                .unwrap();
                task.contains(&ep.slots()[0].tree.subtasks[0].task)
            })
            .take(n)
            .collect()
    }

    #[test]
    fn crafting_within_pair_budget() {
        for cfg in find_depth_one(&[TaskType::CraftSpawn, TaskType::CraftDespawn], 8) {
            let (ep, _) = Episode::reset(&EpisodeConfig {
                p_multi: 0.0,
                ..cfg.clone()
            })
            .unwrap();
            let k = ep.slots()[0]
                .world
                .entities
                .iter()
                .filter(|e| e.is_task())
                .count();
            let r = brute_force_explore(&cfg, 1).unwrap();
            assert!(r.success, "seed {}", cfg.seed);
            let mine = r.pairings.iter().filter(|p| p.world == 0).count();
            assert!(mine <= k * (k - 1) / 2, "{mine} pairings for {k} objects");
        }
    }

    #[test]
    fn machine_within_delivery_budget() {
        for cfg in find_depth_one(&[TaskType::InOutMachine], 8) {
            let r = brute_force_explore(&cfg, 1).unwrap();
            assert!(r.success, "seed {}", cfg.seed);
        }
    }

    #[test]
    fn two_agents_never_repeat_a_pair() {
        for seed in 0..20 {
            let r = brute_force_explore(&EpisodeConfig::default().with_seed(seed), 2).unwrap();
            let mut seen = BTreeSet::new();
            for p in &r.pairings {
                assert!(
                    seen.insert((p.world, unordered(p.first, p.second))),
                    "{p:?}"
                );
            }
        }
    }
}
