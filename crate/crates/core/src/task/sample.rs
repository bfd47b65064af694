//! Random task trees, sampled from the final stage backwards so each stage
//! is built to produce exactly what its successor consumes.

use super::{
    required_spawn, EndCondition, EndKind, Subtask, SubtaskParams, TaskTree, TaskType,
    FORCED_WINDOW, LANDMARK_WINDOW,
};
use crate::rng::{Domain, SeedStream};
use crate::world::{AgentId, ObjectSpec};
use crate::{Error, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::BTreeSet;

const MAX_ATTEMPTS: usize = 1000;

/// Task types that may appear at `stage` of a `depth`-stage tree.
///
/// Types listed in `preceding` are dropped as long as something else is
/// left.
pub fn legal_subtask_pool(
    stage: usize,
    depth: usize,
    end: EndKind,
    preceding: &[TaskType],
    forced: bool,
) -> Result<BTreeSet<TaskType>> {
    if depth == 0 {
        return Err(Error::InvalidDepth(depth));
    }
    if stage == 0 || stage > depth {
        return Err(Error::InvalidStage { stage, depth });
    }
    let full: BTreeSet<TaskType> = if stage == depth {
        match end {
            EndKind::ObjectExists => [TaskType::CraftSpawn, TaskType::InOutMachine].into(),
            EndKind::ObjectNotExists => [TaskType::DropOffPoint, TaskType::CraftDespawn].into(),
        }
    } else if forced {
        [
            TaskType::ForcedLandmarks,
            TaskType::ForcedLemonHunt,
            TaskType::CraftSpawn,
            TaskType::InOutMachine,
            TaskType::MeetingPoint,
        ]
        .into()
    } else {
        [
            TaskType::ActivateLandmarks,
            TaskType::LemonHunt,
            TaskType::CraftSpawn,
            TaskType::InOutMachine,
        ]
        .into()
    };
    let fresh: BTreeSet<TaskType> = full
        .iter()
        .filter(|t| !preceding.contains(t))
        .copied()
        .collect();
    Ok(if fresh.is_empty() { full } else { fresh })
}

/// Samples a tree of `depth` stages with all specs drawn from `pool`.
///
/// The result is a pure function of the arguments.
pub fn sample_task_tree(
    seed: u64,
    depth: usize,
    forced: bool,
    pool: &[ObjectSpec],
) -> Result<TaskTree> {
    if depth == 0 {
        return Err(Error::InvalidDepth(depth));
    }
    let mut specs: Vec<ObjectSpec> = Vec::new();
    for s in pool {
        if !specs.contains(s) {
            specs.push(*s);
        }
    }
    if specs.is_empty() {
        return Err(Error::EmptyPool);
    }
    if forced && depth < 2 {
        return Err(Error::Sampling(
            "cooperative stages cannot be final, so forced trees need at least two stages".into(),
        ));
    }
    let mut rng = SeedStream::new(seed).rng(Domain::Tree, 0);
    for _ in 0..MAX_ATTEMPTS {
        let end_kind = if rng.gen_bool(0.5) {
            EndKind::ObjectExists
        } else {
            EndKind::ObjectNotExists
        };
        let kinds = sample_kinds(&mut rng, depth, end_kind, forced)?;
        if let Some(tree) = assign_specs(&mut rng, &specs, end_kind, &kinds, seed, forced) {
            tree.validate()?;
            return Ok(tree);
        }
    }
    Err(Error::Sampling(format!(
        "no consistent assignment for depth {depth} from {} specs",
        specs.len()
    )))
}

fn sample_kinds<R: Rng>(
    rng: &mut R,
    depth: usize,
    end: EndKind,
    forced: bool,
) -> Result<Vec<TaskType>> {
    loop {
        let mut used = Vec::with_capacity(depth);
        for stage in (1..=depth).rev() {
            let pool: Vec<TaskType> = legal_subtask_pool(stage, depth, end, &used, forced)?
                .into_iter()
                .collect();
            used.push(*pool.choose(rng).expect("pools are never empty"));
        }
        used.reverse();
        if !forced || used.iter().any(|t| t.is_forced()) {
            return Ok(used);
        }
    }
}

/// Draws specs under the role constraints. Unique specs (target, lemons,
/// handed-over objects) appear nowhere else; common specs may repeat.
struct Draw<'a, R> {
    rng: &'a mut R,
    pool: &'a [ObjectSpec],
    unique: BTreeSet<ObjectSpec>,
    common: BTreeSet<ObjectSpec>,
}

impl<R: Rng> Draw<'_, R> {
    fn unique(&mut self, exclude: &[ObjectSpec]) -> Option<ObjectSpec> {
        let c: Vec<ObjectSpec> = self
            .pool
            .iter()
            .filter(|s| {
                !self.unique.contains(s) && !self.common.contains(s) && !exclude.contains(s)
            })
            .copied()
            .collect();
        let s = *c.choose(self.rng)?;
        self.unique.insert(s);
        Some(s)
    }

    fn common(&mut self, exclude: &[ObjectSpec]) -> Option<ObjectSpec> {
        let c: Vec<ObjectSpec> = self
            .pool
            .iter()
            .filter(|s| !self.unique.contains(s) && !exclude.contains(s))
            .copied()
            .collect();
        let s = *c.choose(self.rng)?;
        self.common.insert(s);
        Some(s)
    }
}

fn roles<R: Rng>(rng: &mut R) -> [AgentId; 2] {
    if rng.gen_bool(0.5) {
        [AgentId(0), AgentId(1)]
    } else {
        [AgentId(1), AgentId(0)]
    }
}

fn assign_specs<R: Rng>(
    rng: &mut R,
    pool: &[ObjectSpec],
    end_kind: EndKind,
    kinds: &[TaskType],
    seed: u64,
    forced: bool,
) -> Option<TaskTree> {
    let depth = kinds.len();
    let mut d = Draw {
        rng,
        pool,
        unique: BTreeSet::new(),
        common: BTreeSet::new(),
    };
    let target = d.unique(&[])?;
    let mut built: Vec<Subtask> = Vec::with_capacity(depth);
    for s in (1..=depth).rev() {
        let task = kinds[s - 1];
        let last = s == depth;
        // What this stage must hand on.
        let needed = if last {
            (end_kind == EndKind::ObjectExists).then_some(target)
        } else {
            built.last().and_then(|next: &Subtask| next.carried_spec())
        };
        let n = task.input_count();
        let carried = (s > 1 && n > 0).then(|| d.rng.gen_range(0..n));
        let mut inputs: Vec<Option<ObjectSpec>> = vec![None; n];
        if last && end_kind == EndKind::ObjectNotExists {
            let at = d.rng.gen_range(0..n);
            inputs[at] = Some(target);
        }
        let mut params = SubtaskParams::default();
        match task {
            TaskType::ActivateLandmarks => {
                params.landmarks = if d.rng.gen_bool(0.5) { 2 } else { 1 };
                params.window = (params.landmarks == 2).then_some(LANDMARK_WINDOW);
            }
            TaskType::ForcedLandmarks => {
                params.landmarks = 2;
                params.window = Some(FORCED_WINDOW);
                params.roles = Some(roles(d.rng));
            }
            TaskType::MeetingPoint => {
                params.landmarks = 1;
                params.window = Some(FORCED_WINDOW);
            }
            TaskType::LemonHunt => params.lemon = Some(d.unique(&[])?),
            TaskType::ForcedLemonHunt => {
                params.lemon = Some(d.unique(&[])?);
                params.roles = Some(roles(d.rng));
            }
            _ => {}
        }
        let product = match (task.is_producer(), needed) {
            (false, _) => None,
            (true, Some(p)) => Some(p),
            // By-product for a successor that needs nothing.
            (true, None) if matches!(task, TaskType::CraftSpawn | TaskType::InOutMachine) => {
                Some(d.common(&[])?)
            }
            (true, None) => None,
        };
        for i in 0..n {
            if inputs[i].is_some() {
                continue;
            }
            let mut exclude: Vec<ObjectSpec> = inputs.iter().flatten().copied().collect();
            exclude.extend(product);
            exclude.extend(params.lemon);
            inputs[i] = Some(if Some(i) == carried {
                d.unique(&exclude)?
            } else {
                d.common(&exclude)?
            });
        }
        let inputs: Vec<ObjectSpec> = inputs.into_iter().map(|s| s.unwrap()).collect();
        let outputs = if task.is_producer() {
            needed.into_iter().collect()
        } else {
            Vec::new()
        };
        built.push(Subtask {
            stage: s as u8,
            task,
            inputs,
            carried,
            outputs,
            product,
            params,
        });
    }
    built.reverse();
    Some(TaskTree {
        depth,
        initial_spawn: required_spawn(&built),
        subtasks: built,
        end: EndCondition {
            kind: end_kind,
            target,
        },
        seed,
        forced,
    })
}
