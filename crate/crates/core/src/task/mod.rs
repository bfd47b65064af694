//! Task trees: a chain of subtasks where each stage produces what the next
//! one needs, closed by a condition on a target object.

mod materialize;
mod predicate;
mod sample;
mod variants;

pub use materialize::materialize;
pub use predicate::{landmark_slots, stage_predicate, StageStatus};
pub use sample::{legal_subtask_pool, sample_task_tree};
pub use variants::{landmark_smoke_task, make_pressure_plate_task};

use crate::world::{AgentId, EnvKind, ObjectSpec};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Window between the first and last landmark activation of a two-landmark
/// stage.
pub const LANDMARK_WINDOW: u64 = 300;
/// Window for stages that need both agents at once.
pub const FORCED_WINDOW: u64 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskType {
    ActivateLandmarks,
    LemonHunt,
    CraftSpawn,
    CraftDespawn,
    InOutMachine,
    DropOffPoint,
    ForcedLandmarks,
    MeetingPoint,
    ForcedLemonHunt,
}

impl TaskType {
    pub const ALL: [TaskType; 9] = [
        TaskType::ActivateLandmarks,
        TaskType::LemonHunt,
        TaskType::CraftSpawn,
        TaskType::CraftDespawn,
        TaskType::InOutMachine,
        TaskType::DropOffPoint,
        TaskType::ForcedLandmarks,
        TaskType::MeetingPoint,
        TaskType::ForcedLemonHunt,
    ];

    pub fn is_forced(self) -> bool {
        matches!(
            self,
            TaskType::ForcedLandmarks | TaskType::MeetingPoint | TaskType::ForcedLemonHunt
        )
    }

    /// Stages completed through landmark activations.
    pub fn is_landmark(self) -> bool {
        matches!(
            self,
            TaskType::ActivateLandmarks | TaskType::ForcedLandmarks | TaskType::MeetingPoint
        )
    }

    pub fn is_lemon(self) -> bool {
        matches!(self, TaskType::LemonHunt | TaskType::ForcedLemonHunt)
    }

    /// Stages whose completion does not itself create an object, so the
    /// stage product is spawned by the engine.
    pub fn spawns_on_completion(self) -> bool {
        self.is_landmark() || self.is_lemon()
    }

    /// Number of task objects consumed or transformed by the stage.
    pub fn input_count(self) -> usize {
        match self {
            TaskType::ActivateLandmarks | TaskType::ForcedLandmarks | TaskType::MeetingPoint => 0,
            TaskType::LemonHunt
            | TaskType::ForcedLemonHunt
            | TaskType::InOutMachine
            | TaskType::DropOffPoint => 1,
            TaskType::CraftSpawn | TaskType::CraftDespawn => 2,
        }
    }

    /// Whether the stage can hand an object to the next stage.
    pub fn is_producer(self) -> bool {
        !matches!(self, TaskType::CraftDespawn | TaskType::DropOffPoint)
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskType::ActivateLandmarks => "activate_landmarks",
            TaskType::LemonHunt => "lemon_hunt",
            TaskType::CraftSpawn => "craft_spawn",
            TaskType::CraftDespawn => "craft_despawn",
            TaskType::InOutMachine => "in_out_machine",
            TaskType::DropOffPoint => "drop_off_point",
            TaskType::ForcedLandmarks => "forced_landmarks",
            TaskType::MeetingPoint => "meeting_point",
            TaskType::ForcedLemonHunt => "forced_lemon_hunt",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndKind {
    ObjectExists,
    ObjectNotExists,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndCondition {
    pub kind: EndKind,
    pub target: ObjectSpec,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtaskParams {
    /// Landmarks to activate (landmark stages only).
    #[serde(default, skip_serializing_if = "is_zero")]
    pub landmarks: u8,
    /// Maximum steps between the first and last activation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<u64>,
    /// What the input becomes when activated (lemon stages).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemon: Option<ObjectSpec>,
    /// Forced landmarks: owner of each landmark. Forced lemon hunt:
    /// `[switcher, consumer]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roles: Option<[AgentId; 2]>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub plate_gated: bool,
}

fn is_zero(v: &u8) -> bool {
    *v == 0
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subtask {
    pub stage: u8,
    pub task: TaskType,
    pub inputs: Vec<ObjectSpec>,
    /// Index of the input handed over by the preceding stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carried: Option<usize>,
    /// Objects this stage hands to the next one (or the end target).
    pub outputs: Vec<ObjectSpec>,
    /// Object created on completion, including by-products nobody needs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub product: Option<ObjectSpec>,
    #[serde(default)]
    pub params: SubtaskParams,
}

impl Subtask {
    pub fn carried_spec(&self) -> Option<ObjectSpec> {
        self.carried.map(|i| self.inputs[i])
    }

    /// Inputs that are placed in the world at reset.
    pub fn prespawned(&self) -> impl Iterator<Item = ObjectSpec> + '_ {
        self.inputs
            .iter()
            .enumerate()
            .filter(move |(i, _)| Some(*i) != self.carried)
            .map(|(_, s)| *s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskTree {
    pub depth: usize,
    pub subtasks: Vec<Subtask>,
    pub end: EndCondition,
    pub initial_spawn: Vec<(ObjectSpec, u32)>,
    pub seed: u64,
    #[serde(default)]
    pub forced: bool,
}

/// Interaction keys a stage claims in the episode's table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Key {
    Pair(ObjectSpec, ObjectSpec),
    Activate(ObjectSpec),
    Machine(EnvKind, ObjectSpec),
}

fn keys(st: &Subtask) -> Vec<Key> {
    let i = &st.inputs;
    match st.task {
        TaskType::CraftSpawn | TaskType::CraftDespawn => {
            let (a, b) = crate::world::pair_key(i[0], i[1]);
            vec![Key::Pair(a, b)]
        }
        TaskType::LemonHunt | TaskType::ForcedLemonHunt => {
            let mut k = vec![Key::Activate(i[0])];
            k.extend(st.params.lemon.map(Key::Activate));
            k
        }
        TaskType::InOutMachine => vec![Key::Machine(EnvKind::InOutMachine, i[0])],
        TaskType::DropOffPoint => vec![Key::Machine(EnvKind::DropOffPoint, i[0])],
        _ => Vec::new(),
    }
}

/// Objects placed at reset: every stage-1 input, and each later input that
/// is not handed over by the preceding stage.
pub fn required_spawn(subtasks: &[Subtask]) -> Vec<(ObjectSpec, u32)> {
    let mut counts: BTreeMap<ObjectSpec, u32> = BTreeMap::new();
    for st in subtasks {
        for s in st.prespawned() {
            *counts.entry(s).or_default() += 1;
        }
    }
    counts.into_iter().collect()
}

impl TaskTree {
    pub fn stage(&self, s: usize) -> Result<&Subtask> {
        if s == 0 || s > self.depth {
            return Err(Error::InvalidStage {
                stage: s,
                depth: self.depth,
            });
        }
        Ok(&self.subtasks[s - 1])
    }

    pub fn initial_object_count(&self) -> u32 {
        self.initial_spawn.iter().map(|(_, n)| n).sum()
    }

    pub fn needs_env(&self, kind: EnvKind) -> bool {
        self.subtasks.iter().any(|st| match kind {
            EnvKind::InOutMachine => st.task == TaskType::InOutMachine,
            EnvKind::DropOffPoint => st.task == TaskType::DropOffPoint,
            EnvKind::PressurePlate => st.params.plate_gated,
            EnvKind::Landmark => matches!(
                st.task,
                TaskType::ActivateLandmarks | TaskType::ForcedLandmarks
            ),
            EnvKind::MeetingLandmark => st.task == TaskType::MeetingPoint,
        })
    }

    /// Checks every structural invariant of a tree.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidTree(m));
        if self.depth == 0 || self.subtasks.len() != self.depth {
            return bad(format!(
                "depth {} with {} subtasks",
                self.depth,
                self.subtasks.len()
            ));
        }
        for (i, st) in self.subtasks.iter().enumerate() {
            let s = i + 1;
            if st.stage as usize != s {
                return bad(format!("subtask {i} carries stage {}", st.stage));
            }
            if st.inputs.len() != st.task.input_count() {
                return bad(format!(
                    "stage {s}: {} inputs for {}",
                    st.inputs.len(),
                    st.task.name()
                ));
            }
            self.validate_params(s, st)?;
            let carried_ok = match st.carried {
                None => s == 1 || st.inputs.is_empty(),
                Some(c) => s > 1 && c < st.inputs.len(),
            };
            if !carried_ok {
                return bad(format!("stage {s}: carried index {:?}", st.carried));
            }
            if st.task.is_producer() && s < self.depth {
                let next = &self.subtasks[s];
                let expect: Vec<ObjectSpec> = next.carried_spec().into_iter().collect();
                if st.outputs != expect {
                    return bad(format!(
                        "stage {s}: outputs {:?} do not feed stage {}",
                        st.outputs,
                        s + 1
                    ));
                }
                if !expect.is_empty() && st.product != Some(expect[0]) {
                    return bad(format!(
                        "stage {s}: product {:?} is not the handed-over object",
                        st.product
                    ));
                }
                if matches!(st.task, TaskType::CraftSpawn | TaskType::InOutMachine)
                    && st.product.is_none()
                {
                    return bad(format!("stage {s}: {} without product", st.task.name()));
                }
            } else if s < self.depth {
                return bad(format!(
                    "stage {s}: {} cannot feed a later stage",
                    st.task.name()
                ));
            }
            if let Some(p) = st.product {
                if st.inputs.contains(&p) {
                    return bad(format!("stage {s}: product {p} is also an input"));
                }
            }
            if st.task.input_count() == 2 && st.inputs[0] == st.inputs[1] {
                return bad(format!("stage {s}: identical crafting inputs"));
            }
        }

        let last = &self.subtasks[self.depth - 1];
        match self.end.kind {
            EndKind::ObjectExists => {
                if !last.task.is_producer() || last.product != Some(self.end.target) {
                    return bad(format!(
                        "final {} does not create {}",
                        last.task.name(),
                        self.end.target
                    ));
                }
                if last.outputs != vec![self.end.target] {
                    return bad("final outputs must be the target".into());
                }
            }
            EndKind::ObjectNotExists => {
                if last.task.is_producer() || !last.inputs.contains(&self.end.target) {
                    return bad(format!(
                        "final {} does not remove {}",
                        last.task.name(),
                        self.end.target
                    ));
                }
                if !last.outputs.is_empty() || last.product.is_some() {
                    return bad("removal stage has outputs".into());
                }
            }
        }

        if self.initial_spawn != required_spawn(&self.subtasks) {
            return bad("initial spawn does not match stage inputs".into());
        }

        // Objects that must have a single role: the target, lemons and
        // everything handed between stages.
        let mut unique: Vec<ObjectSpec> = vec![self.end.target];
        unique.extend(self.subtasks.iter().filter_map(|st| st.params.lemon));
        // A final removal stage may be handed the target itself.
        unique.extend(
            self.subtasks
                .iter()
                .filter_map(|st| st.carried_spec())
                .filter(|s| *s != self.end.target || self.end.kind == EndKind::ObjectExists),
        );
        let mut seen = BTreeSet::new();
        for u in &unique {
            if !seen.insert(*u) {
                return bad(format!("{u} has more than one role"));
            }
        }
        for st in &self.subtasks {
            let last = st.stage as usize == self.depth;
            for s in st.prespawned() {
                let removal_target =
                    last && self.end.kind == EndKind::ObjectNotExists && s == self.end.target;
                if seen.contains(&s) && !removal_target {
                    return bad(format!(
                        "stage {}: prespawned {s} collides with a unique role",
                        st.stage
                    ));
                }
            }
            if let Some(p) = st.product {
                if st.outputs.is_empty() && seen.contains(&p) {
                    return bad(format!(
                        "stage {}: by-product {p} collides with a unique role",
                        st.stage
                    ));
                }
            }
        }

        let mut all_keys = BTreeSet::new();
        for st in &self.subtasks {
            for k in keys(st) {
                if !all_keys.insert(k) {
                    return bad(format!("stage {}: interaction {k:?} reused", st.stage));
                }
            }
        }

        if self.forced && !self.subtasks.iter().any(|st| st.task.is_forced()) {
            return bad("forced tree without a cooperative stage".into());
        }
        Ok(())
    }

    fn validate_params(&self, s: usize, st: &Subtask) -> Result<()> {
        let p = &st.params;
        let ok = match st.task {
            TaskType::ActivateLandmarks => {
                matches!(p.landmarks, 1 | 2)
                    && p.window == (p.landmarks == 2).then_some(LANDMARK_WINDOW)
                    && p.roles.is_none()
            }
            TaskType::ForcedLandmarks => {
                p.landmarks == 2
                    && p.window == Some(FORCED_WINDOW)
                    && p.roles.is_some_and(|r| r[0] != r[1])
            }
            TaskType::MeetingPoint => p.landmarks == 1 && p.window == Some(FORCED_WINDOW),
            TaskType::LemonHunt => p.lemon.is_some() && p.roles.is_none(),
            TaskType::ForcedLemonHunt => p.lemon.is_some() && p.roles.is_some_and(|r| r[0] != r[1]),
            _ => p.landmarks == 0 && p.lemon.is_none() && p.roles.is_none(),
        };
        if !ok {
            return Err(Error::InvalidTree(format!(
                "stage {s}: bad parameters {p:?} for {}",
                st.task.name()
            )));
        }
        if p.lemon.is_some_and(|l| st.inputs.contains(&l)) {
            return Err(Error::InvalidTree(format!(
                "stage {s}: lemon equals its input"
            )));
        }
        Ok(())
    }

    /// Every spec mentioned by the tree.
    pub fn specs(&self) -> BTreeSet<ObjectSpec> {
        let mut out = BTreeSet::from([self.end.target]);
        for st in &self.subtasks {
            out.extend(st.inputs.iter().copied());
            out.extend(st.outputs.iter().copied());
            out.extend(st.product);
            out.extend(st.params.lemon);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type_properties() {
        for t in TaskType::ALL {
            assert_eq!(
                t.is_producer(),
                !matches!(t, TaskType::CraftDespawn | TaskType::DropOffPoint)
            );
        }
        assert_eq!(TaskType::CraftSpawn.input_count(), 2);
        assert!(TaskType::MeetingPoint.spawns_on_completion());
        assert!(!TaskType::InOutMachine.spawns_on_completion());
    }
}
