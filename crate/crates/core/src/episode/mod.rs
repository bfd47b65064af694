//! Episode lifecycle: mode sampling, reset, stepping, observations and
//! traces.

mod observe;
mod trace;

pub use observe::{
    render_pixel_obs, symbolic_obs, Observation, PIXEL_SIZE, SLOTS, SLOT_WIDTH, SYMBOLIC_WIDTH,
};
pub use trace::{
    read_trace, replay_trace, round_reward, write_trace, Divergence, EpisodeTrace, ReplayReport,
    StepRecord, TraceFooter, TraceHeader, WorldEvent, TRACE_VERSION,
};

use crate::geometry::Vec2;
use crate::reward::{
    episode_outcome, on_events, timestep_reward, EpisodeOutcome, RewardConfig, StageProgress,
};
use crate::rng::{Domain, SeedStream};
use crate::task::{
    landmark_smoke_task, make_pressure_plate_task, materialize, sample_task_tree, stage_predicate,
    StageStatus, TaskTree, TaskType,
};
use crate::world::{
    advance_physics, resolve_activate, resolve_contacts, resolve_grasp, ActionCommand,
    ActivationEvent, AgentId, ArenaConfig, Effect, EntityKind, InteractionTable, ObjectPool, Via,
    WorldState,
};
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationMode {
    Symbolic,
    Pixel,
}

/// Where each world's task tree comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskDistribution {
    /// Random trees of `depth` stages.
    Sampled,
    /// One landmark to activate; used for smoke training.
    LandmarkSmoke,
    /// Plate-gated machine delivery.
    PressurePlate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub depth: usize,
    pub step_limit: u64,
    pub p_multi: f64,
    pub forced: bool,
    pub pool: ObjectPool,
    pub reward: RewardConfig,
    pub observation: ObservationMode,
    pub seed: u64,
    pub terminate_on_success: bool,
    pub tasks: TaskDistribution,
    pub arena: ArenaConfig,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            depth: 3,
            step_limit: 1000,
            p_multi: 0.5,
            forced: false,
            pool: ObjectPool::Training,
            reward: RewardConfig::default(),
            observation: ObservationMode::Symbolic,
            seed: 0,
            terminate_on_success: false,
            tasks: TaskDistribution::Sampled,
            arena: ArenaConfig::default(),
        }
    }
}

impl EpisodeConfig {
    /// Six stages, a 4000-step limit and no completion bonuses.
    pub fn open_ended() -> Self {
        Self {
            depth: 6,
            step_limit: 4000,
            reward: RewardConfig {
                bonus_enabled: false,
                ..RewardConfig::default()
            },
            ..Self::default()
        }
    }

    /// One room, one landmark, 200 steps.
    pub fn smoke() -> Self {
        Self {
            depth: 1,
            step_limit: 200,
            tasks: TaskDistribution::LandmarkSmoke,
            arena: ArenaConfig::single_room(),
            ..Self::default()
        }
    }

    pub fn forced_coop() -> Self {
        Self {
            forced: true,
            p_multi: 1.0,
            ..Self::default()
        }
    }

    pub fn novel_objects() -> Self {
        Self {
            pool: ObjectPool::Novel,
            ..Self::default()
        }
    }

    pub fn pressure_plate() -> Self {
        Self {
            depth: 1,
            p_multi: 1.0,
            tasks: TaskDistribution::PressurePlate,
            ..Self::default()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.step_limit < 1 {
            return bad("step_limit must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.p_multi) {
            return bad(format!("p_multi {} outside [0, 1]", self.p_multi));
        }
        if self.depth < 1 {
            return bad("depth must be at least 1".into());
        }
        if self.forced && self.depth < 2 {
            return bad("forced trees need depth of at least 2".into());
        }
        self.reward.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Both agents share one world and one tree.
    Multi,
    /// Each agent plays alone in its own world with its own tree.
    Single,
}

pub fn sample_mode<R: Rng>(rng: &mut R, p_multi: f64) -> Mode {
    if rng.gen::<f64>() < p_multi {
        Mode::Multi
    } else {
        Mode::Single
    }
}

/// One world with its task, interaction table and progress.
#[derive(Clone, Debug)]
pub struct WorldSlot {
    pub tree: TaskTree,
    pub world: WorldState,
    pub table: InteractionTable,
    pub progress: StageProgress,
    pub events: Vec<ActivationEvent>,
    /// Events before this step no longer count for the frontier stage.
    pub since: u64,
    pub agents: Vec<AgentId>,
}

/// Distance a stage output is placed inward from the landmark that
/// produced it.
const DROP_INSET: f64 = 24.0;

impl WorldSlot {
    /// Evaluates the frontier stage after the events of step `t` and
    /// returns the completion bonus.
    fn evaluate(&mut self, t: u64, reward: &RewardConfig) -> Result<(f64, Vec<ActivationEvent>)> {
        let Some(s) = self.progress.frontier() else {
            return Ok((0.0, Vec::new()));
        };
        let status = stage_predicate(
            &self.tree,
            s,
            &self.progress,
            &self.events,
            self.since,
            t,
            &self.world,
        )?;
        match status {
            StageStatus::Incomplete => Ok((0.0, Vec::new())),
            StageStatus::FailedWindow { .. } => {
                for e in self
                    .world
                    .entities
                    .iter_mut()
                    .filter(|e| e.stage == Some(s as u8))
                {
                    e.lit_at = None;
                }
                self.since = t + 1;
                Ok((0.0, Vec::new()))
            }
            StageStatus::Complete { .. } => {
                let bonus = on_events(&mut self.progress, &[s], t, reward)?;
                let st = self.tree.stage(s)?.clone();
                let mut spawned = Vec::new();
                if let (true, Some(product)) = (st.task.spawns_on_completion(), st.product) {
                    let (site, agent) = self.completion_site(&st.task, t);
                    let entity = self.world.spawn(EntityKind::Task(product), site);
                    spawned.push(ActivationEvent {
                        t,
                        agent,
                        effect: Effect::Spawned {
                            entity,
                            spec: product,
                        },
                    });
                }
                self.table.active_stage = self.progress.frontier().map(|f| f as u8);
                self.since = t + 1;
                self.events.extend(spawned.iter().copied());
                Ok((bonus, spawned))
            }
        }
    }

    fn completion_site(&self, task: &TaskType, t: u64) -> (Vec2, Option<AgentId>) {
        for ev in self.events.iter().rev().take_while(|e| e.t == t) {
            match ev.effect {
                Effect::LandmarkActivated { entity } if task.is_landmark() => {
                    if let Some(e) = self.world.entity(entity) {
                        return (drop_site(&self.world.arena, e.pos), ev.agent);
                    }
                }
                Effect::Consumed {
                    at,
                    via: Via::Activation,
                    ..
                } if task.is_lemon() => return (at, ev.agent),
                _ => {}
            }
        }
        (self.world.arena.center(), None)
    }
}

/// A free spot `DROP_INSET` inward from an edge position.
fn drop_site(arena: &ArenaConfig, p: Vec2) -> Vec2 {
    let sides = [
        (p.x, Vec2::new(1.0, 0.0)),
        (arena.width - p.x, Vec2::new(-1.0, 0.0)),
        (p.y, Vec2::new(0.0, 1.0)),
        (arena.height - p.y, Vec2::new(0.0, -1.0)),
    ];
    let normal = sides.iter().min_by(|a, b| a.0.total_cmp(&b.0)).unwrap().1;
    let mut q = p + normal * DROP_INSET;
    let r = arena.object_radius;
    for _ in 0..100 {
        if arena.is_free(q, r) {
            break;
        }
        let to_center = (arena.center() - q).normalized().unwrap_or(normal);
        q = q + to_center * 2.0;
    }
    q
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub observations: [Observation; 2],
    pub rewards: [f64; 2],
    pub done: bool,
    /// Events of this step, tagged with their world index.
    pub events: Vec<WorldEvent>,
}

#[derive(Clone, Debug)]
pub struct Episode {
    config: EpisodeConfig,
    mode: Mode,
    slots: Vec<WorldSlot>,
    t: u64,
    done: bool,
    prev_action: [ActionCommand; 2],
    prev_reward: [f64; 2],
    returns: [f64; 2],
    trace: Option<EpisodeTrace>,
}

fn build_tree(config: &EpisodeConfig, seed: u64) -> Result<TaskTree> {
    let pool = config.pool.specs();
    match config.tasks {
        TaskDistribution::Sampled => sample_task_tree(seed, config.depth, config.forced, &pool),
        TaskDistribution::LandmarkSmoke => landmark_smoke_task(seed, &pool),
        TaskDistribution::PressurePlate => Ok(make_pressure_plate_task(seed, &pool)?.0),
    }
}

impl Episode {
    /// Samples the mode and trees for `config.seed` and places everything.
    pub fn reset(config: &EpisodeConfig) -> Result<(Episode, [Observation; 2])> {
        config.validate()?;
        let stream = SeedStream::new(config.seed);
        let mode = sample_mode(&mut stream.rng(Domain::Mode, 0), config.p_multi);
        let groups: Vec<Vec<AgentId>> = match mode {
            Mode::Multi => vec![vec![AgentId(0), AgentId(1)]],
            Mode::Single => vec![vec![AgentId(0)], vec![AgentId(1)]],
        };
        let mut slots = Vec::with_capacity(groups.len());
        for (k, agents) in groups.into_iter().enumerate() {
            let tree = build_tree(config, stream.child(Domain::Tree, k as u64).root())?;
            let mut rng = stream.rng(Domain::Placement, k as u64);
            let (world, table) = materialize(&tree, &mut rng, &config.arena, &agents)?;
            slots.push(WorldSlot {
                progress: StageProgress::new(tree.depth),
                tree,
                world,
                table,
                events: Vec::new(),
                since: 0,
                agents,
            });
        }
        let ep = Episode {
            config: config.clone(),
            mode,
            slots,
            t: 0,
            done: false,
            prev_action: [ActionCommand::NULL; 2],
            prev_reward: [0.0; 2],
            returns: [0.0; 2],
            trace: None,
        };
        let obs = [ep.observe(AgentId(0)), ep.observe(AgentId(1))];
        Ok((ep, obs))
    }

    /// Starts recording a trace. Must be called before the first step.
    pub fn record(&mut self) {
        self.trace = Some(EpisodeTrace {
            header: TraceHeader {
                version: TRACE_VERSION,
                config: self.config.clone(),
                seed: self.config.seed,
                mode: self.mode,
                trees: self.slots.iter().map(|s| s.tree.clone()).collect(),
            },
            steps: Vec::new(),
            footer: None,
        });
    }

    /// The recorded trace, once the episode is over.
    pub fn take_trace(&mut self) -> Option<EpisodeTrace> {
        self.trace.take()
    }

    pub fn step(&mut self, actions: [ActionCommand; 2]) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        let actions = actions.map(ActionCommand::clamped);
        let t = self.t;
        let mut rewards = [0.0; 2];
        let mut events = Vec::new();
        for (k, slot) in self.slots.iter_mut().enumerate() {
            let base = timestep_reward(&slot.progress, &self.config.reward);
            let cmds: Vec<(AgentId, ActionCommand)> = slot
                .agents
                .iter()
                .map(|a| (*a, actions[a.index()]))
                .collect();
            for (a, c) in &cmds {
                resolve_grasp(&mut slot.world, *a, c.grasp);
            }
            let contacts = advance_physics(&mut slot.world, &cmds);
            let mut ev = resolve_contacts(&mut slot.world, &contacts, &mut slot.table);
            for (a, c) in &cmds {
                if c.activate {
                    ev.extend(resolve_activate(&mut slot.world, *a, &mut slot.table));
                }
            }
            slot.events.extend(ev.iter().copied());
            let (bonus, spawned) = slot.evaluate(t, &self.config.reward)?;
            ev.extend(spawned);
            for a in &slot.agents {
                rewards[a.index()] = base + bonus;
            }
            slot.world.t = t + 1;
            events.extend(ev.into_iter().map(|event| WorldEvent { world: k, event }));
        }
        self.t = t + 1;
        let success = self.slots.iter().all(|s| s.progress.is_complete());
        self.done =
            self.t >= self.config.step_limit || (self.config.terminate_on_success && success);
        self.prev_action = actions;
        self.prev_reward = rewards;
        for i in 0..2 {
            self.returns[i] += rewards[i];
        }
        if self.trace.is_some() {
            let digest = self.digest();
            let outcomes = self.outcomes();
            let returns = self.returns.map(round_reward);
            let done = self.done;
            let trace = self.trace.as_mut().unwrap();
            let mut flat = [0.0; 8];
            flat[..4].copy_from_slice(&actions[0].to_array());
            flat[4..].copy_from_slice(&actions[1].to_array());
            trace.steps.push(StepRecord {
                t,
                actions: flat,
                rewards: rewards.map(round_reward),
                events: events.clone(),
                digest,
            });
            if done {
                trace.footer = Some(TraceFooter {
                    steps: t + 1,
                    outcomes,
                    returns,
                });
            }
        }
        Ok(StepOutcome {
            observations: [self.observe(AgentId(0)), self.observe(AgentId(1))],
            rewards,
            done: self.done,
            events,
        })
    }

    pub fn observe(&self, agent: AgentId) -> Observation {
        let world = &self.slots[self.slot_index(agent)].world;
        let view = match self.config.observation {
            ObservationMode::Symbolic => symbolic_obs(world, agent),
            ObservationMode::Pixel => render_pixel_obs(world, agent),
        };
        Observation {
            view,
            prev_action: self.prev_action[agent.index()].to_array(),
            prev_reward: self.prev_reward[agent.index()],
        }
    }

    pub fn slot_index(&self, agent: AgentId) -> usize {
        match self.mode {
            Mode::Multi => 0,
            Mode::Single => agent.index(),
        }
    }

    pub fn slot(&self, agent: AgentId) -> &WorldSlot {
        &self.slots[self.slot_index(agent)]
    }

    pub fn slots(&self) -> &[WorldSlot] {
        &self.slots
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.config
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn returns(&self) -> [f64; 2] {
        self.returns
    }

    /// Per-world outcomes, in world order.
    pub fn outcomes(&self) -> Vec<EpisodeOutcome> {
        self.slots
            .iter()
            .map(|s| episode_outcome(&s.progress))
            .collect()
    }

    pub fn outcome_for(&self, agent: AgentId) -> EpisodeOutcome {
        episode_outcome(&self.slot(agent).progress)
    }

    /// Hash of every world's physical state.
    pub fn digest(&self) -> String {
        self.slots
            .iter()
            .map(|s| s.world.digest())
            .collect::<Vec<_>>()
            .join(":")
    }
}
