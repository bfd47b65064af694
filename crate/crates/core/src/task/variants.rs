//! Hand-shaped trees for evaluation and smoke training.

use super::materialize::interaction_table;
use super::{required_spawn, EndCondition, EndKind, Subtask, SubtaskParams, TaskTree, TaskType};
use crate::rng::{Domain, SeedStream};
use crate::world::{InteractionTable, ObjectSpec};
use crate::{Error, Result};
use rand::seq::SliceRandom;

fn tree(seed: u64, subtask: Subtask, target: ObjectSpec) -> TaskTree {
    let subtasks = vec![subtask];
    TaskTree {
        depth: 1,
        initial_spawn: required_spawn(&subtasks),
        subtasks,
        end: EndCondition {
            kind: EndKind::ObjectExists,
            target,
        },
        seed,
        forced: false,
    }
}

/// One stage: deliver an object to the in-out machine while someone stands
/// on the pressure plate.
pub fn make_pressure_plate_task(
    seed: u64,
    pool: &[ObjectSpec],
) -> Result<(TaskTree, InteractionTable)> {
    let mut rng = SeedStream::new(seed).rng(Domain::Tree, 1);
    let picked: Vec<ObjectSpec> = pool.choose_multiple(&mut rng, 2).copied().collect();
    let [input, target] = picked[..] else {
        return Err(Error::Sampling(
            "pressure plate task needs two distinct specs".into(),
        ));
    };
    let t = tree(
        seed,
        Subtask {
            stage: 1,
            task: TaskType::InOutMachine,
            inputs: vec![input],
            carried: None,
            outputs: vec![target],
            product: Some(target),
            params: SubtaskParams {
                plate_gated: true,
                ..Default::default()
            },
        },
        target,
    );
    t.validate()?;
    let table = interaction_table(&t);
    Ok((t, table))
}

/// One stage: activate a single landmark. Completion spawns the target.
pub fn landmark_smoke_task(seed: u64, pool: &[ObjectSpec]) -> Result<TaskTree> {
    let mut rng = SeedStream::new(seed).rng(Domain::Tree, 2);
    let target = *pool.choose(&mut rng).ok_or(Error::EmptyPool)?;
    let t = tree(
        seed,
        Subtask {
            stage: 1,
            task: TaskType::ActivateLandmarks,
            inputs: vec![],
            carried: None,
            outputs: vec![target],
            product: Some(target),
            params: SubtaskParams {
                landmarks: 1,
                ..Default::default()
            },
        },
        target,
    );
    t.validate()?;
    Ok(t)
}
