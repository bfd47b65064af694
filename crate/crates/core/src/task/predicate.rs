//! Stage completion over the activation event log.

use super::{EndKind, TaskTree, TaskType};
use crate::reward::StageProgress;
use crate::world::{
    ActivationEvent, AgentId, Effect, EntityId, EntityKind, EnvKind, Via, WorldState,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageStatus {
    Incomplete,
    Complete {
        at: u64,
    },
    /// The activation window ran out; lights reset and the stage restarts.
    FailedWindow {
        at: u64,
    },
}

/// Activations a landmark stage needs: each landmark, with the agent that
/// must activate it if the stage fixes one.
pub fn landmark_slots(
    tree: &TaskTree,
    stage: usize,
    world: &WorldState,
) -> Result<Vec<(EntityId, Option<AgentId>)>> {
    let st = tree.stage(stage)?;
    let tagged = world.entities.iter().filter(|e| {
        e.stage == Some(stage as u8) && e.kind.env_kind().is_some_and(EnvKind::is_landmark)
    });
    Ok(match st.task {
        TaskType::MeetingPoint => tagged
            .flat_map(|e| [(e.id, Some(AgentId(0))), (e.id, Some(AgentId(1)))])
            .collect(),
        t if t.is_landmark() => tagged.map(|e| (e.id, e.assigned)).collect(),
        _ => Vec::new(),
    })
}

fn window_status(
    slots: &[(EntityId, Option<AgentId>)],
    window: Option<u64>,
    events: &[&ActivationEvent],
    t: u64,
) -> StageStatus {
    let mut filled = vec![false; slots.len()];
    let mut first: Option<u64> = None;
    let expired = |first: Option<u64>, now: u64| match (first, window) {
        (Some(f), Some(w)) => now - f > w,
        _ => false,
    };
    for ev in events {
        let Effect::LandmarkActivated { entity } = ev.effect else {
            continue;
        };
        let slot = slots.iter().enumerate().position(|(i, (id, who))| {
            !filled[i] && *id == entity && who.map_or(true, |w| Some(w) == ev.agent)
        });
        let Some(i) = slot else {
            continue;
        };
        if expired(first, ev.t) {
            return StageStatus::FailedWindow { at: ev.t };
        }
        filled[i] = true;
        first.get_or_insert(ev.t);
        if filled.iter().all(|f| *f) {
            return StageStatus::Complete { at: ev.t };
        }
    }
    if expired(first, t) {
        return StageStatus::FailedWindow { at: t };
    }
    StageStatus::Incomplete
}

/// Whether `stage` is complete at step `t`, looking only at events from
/// `since` onwards. Only the frontier stage may be queried.
pub fn stage_predicate(
    tree: &TaskTree,
    stage: usize,
    progress: &StageProgress,
    events: &[ActivationEvent],
    since: u64,
    t: u64,
    world: &WorldState,
) -> Result<StageStatus> {
    let st = tree.stage(stage)?;
    if progress.frontier() != Some(stage) {
        return Err(Error::OutOfOrderStage {
            requested: stage,
            frontier: progress.frontier(),
        });
    }
    let recent: Vec<&ActivationEvent> =
        events.iter().filter(|e| e.t >= since && e.t <= t).collect();
    let status = match st.task {
        TaskType::ActivateLandmarks | TaskType::ForcedLandmarks | TaskType::MeetingPoint => {
            let slots = landmark_slots(tree, stage, world)?;
            if slots.is_empty() {
                return Err(Error::InvalidTree(format!(
                    "stage {stage} has no landmarks in the world"
                )));
            }
            window_status(&slots, st.params.window, &recent, t)
        }
        _ => {
            let hit = recent.iter().find(|ev| matches_stage(st, &ev.effect));
            match hit {
                Some(ev) => StageStatus::Complete { at: ev.t },
                None => StageStatus::Incomplete,
            }
        }
    };
    if let StageStatus::Complete { .. } = status {
        if stage == tree.depth && !end_holds(tree, world) {
            return Ok(StageStatus::Incomplete);
        }
    }
    Ok(status)
}

fn matches_stage(st: &super::Subtask, effect: &Effect) -> bool {
    match (st.task, *effect) {
        (
            TaskType::LemonHunt | TaskType::ForcedLemonHunt,
            Effect::Consumed {
                spec,
                via: Via::Activation,
                ..
            },
        ) => Some(spec) == st.params.lemon,
        (TaskType::CraftSpawn | TaskType::CraftDespawn, Effect::Crafted { specs, .. }) => {
            let mut a = specs;
            let mut b = [st.inputs[0], st.inputs[1]];
            a.sort();
            b.sort();
            a == b
        }
        (
            TaskType::InOutMachine,
            Effect::Transformed {
                from,
                to,
                via: Via::InOutMachine,
                ..
            },
        ) => from == st.inputs[0] && Some(to) == st.product,
        (
            TaskType::DropOffPoint,
            Effect::Consumed {
                spec,
                via: Via::DropOffPoint,
                ..
            },
        ) => spec == st.inputs[0],
        _ => false,
    }
}

fn end_holds(tree: &TaskTree, world: &WorldState) -> bool {
    let n = world
        .entities
        .iter()
        .filter(|e| e.kind == EntityKind::Task(tree.end.target))
        .count();
    match tree.end.kind {
        // Stages that spawn their output on completion create the target
        // right after this check.
        EndKind::ObjectExists => n > 0 || tree.subtasks[tree.depth - 1].task.spawns_on_completion(),
        EndKind::ObjectNotExists => n == 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use crate::task::{EndCondition, Subtask, SubtaskParams, FORCED_WINDOW, LANDMARK_WINDOW};
    use crate::world::{ArenaConfig, Color, ObjectSpec, Shape};

    const A: ObjectSpec = ObjectSpec::new(Shape::Circle, Color::Red);
    const B: ObjectSpec = ObjectSpec::new(Shape::Square, Color::Green);
    const C: ObjectSpec = ObjectSpec::new(Shape::Triangle, Color::Blue);

    fn landmark_tree(
        task: TaskType,
        n: u8,
        window: Option<u64>,
        roles: Option<[AgentId; 2]>,
    ) -> TaskTree {
        TaskTree {
            depth: 2,
            subtasks: vec![
                Subtask {
                    stage: 1,
                    task,
                    inputs: vec![],
                    carried: None,
                    outputs: vec![A],
                    product: Some(A),
                    params: SubtaskParams {
                        landmarks: n,
                        window,
                        roles,
                        ..Default::default()
                    },
                },
                Subtask {
                    stage: 2,
                    task: TaskType::InOutMachine,
                    inputs: vec![A],
                    carried: Some(0),
                    outputs: vec![C],
                    product: Some(C),
                    params: SubtaskParams::default(),
                },
            ],
            end: EndCondition {
                kind: EndKind::ObjectExists,
                target: C,
            },
            initial_spawn: vec![],
            seed: 0,
            forced: task.is_forced(),
        }
    }

    fn world_for(tree: &TaskTree) -> WorldState {
        let mut w = WorldState::new(ArenaConfig::default());
        let st = &tree.subtasks[0];
        let kind = if st.task == TaskType::MeetingPoint {
            EnvKind::MeetingLandmark
        } else {
            EnvKind::Landmark
        };
        for i in 0..st.params.landmarks as usize {
            let id = w.spawn(
                EntityKind::Env(kind),
                Vec2::new(14.0, 40.0 + 60.0 * i as f64),
            );
            let e = w.entity_mut(id).unwrap();
            e.stage = Some(1);
            e.assigned = st.params.roles.map(|r| r[i]);
        }
        w
    }

    fn lit(t: u64, entity: u32, agent: u8) -> ActivationEvent {
        ActivationEvent {
            t,
            agent: Some(AgentId(agent)),
            effect: Effect::LandmarkActivated {
                entity: EntityId(entity),
            },
        }
    }

    fn eval(tree: &TaskTree, w: &WorldState, events: &[ActivationEvent], t: u64) -> StageStatus {
        stage_predicate(tree, 1, &StageProgress::new(tree.depth), events, 0, t, w).unwrap()
    }

    #[test]
    fn two_landmarks_window_boundary() {
        let tree = landmark_tree(TaskType::ActivateLandmarks, 2, Some(LANDMARK_WINDOW), None);
        tree.validate().unwrap();
        let w = world_for(&tree);
        assert_eq!(
            eval(&tree, &w, &[lit(100, 0, 0), lit(399, 1, 0)], 399),
            StageStatus::Complete { at: 399 }
        );
        assert_eq!(
            eval(&tree, &w, &[lit(100, 0, 0), lit(400, 1, 1)], 400),
            StageStatus::Complete { at: 400 }
        );
        assert_eq!(
            eval(&tree, &w, &[lit(100, 0, 0), lit(401, 1, 0)], 401),
            StageStatus::FailedWindow { at: 401 }
        );
        // Time alone closes the window.
        assert_eq!(
            eval(&tree, &w, &[lit(100, 0, 0)], 400),
            StageStatus::Incomplete
        );
        assert_eq!(
            eval(&tree, &w, &[lit(100, 0, 0)], 401),
            StageStatus::FailedWindow { at: 401 }
        );
        // The same landmark twice does not count.
        assert_eq!(
            eval(&tree, &w, &[lit(100, 0, 0), lit(110, 0, 1)], 110),
            StageStatus::Incomplete
        );
    }

    #[test]
    fn forced_window_boundary() {
        let tree = landmark_tree(
            TaskType::ForcedLandmarks,
            2,
            Some(FORCED_WINDOW),
            Some([AgentId(0), AgentId(1)]),
        );
        tree.validate().unwrap();
        let w = world_for(&tree);
        assert_eq!(
            eval(&tree, &w, &[lit(50, 0, 0), lit(59, 1, 1)], 59),
            StageStatus::Complete { at: 59 }
        );
        assert_eq!(
            eval(&tree, &w, &[lit(50, 0, 0), lit(60, 1, 1)], 60),
            StageStatus::Complete { at: 60 }
        );
        assert_eq!(
            eval(&tree, &w, &[lit(50, 0, 0), lit(61, 1, 1)], 61),
            StageStatus::FailedWindow { at: 61 }
        );
        // Wrong agent on a landmark.
        assert_eq!(
            eval(&tree, &w, &[lit(50, 0, 1), lit(52, 1, 1)], 52),
            StageStatus::Incomplete
        );
    }

    #[test]
    fn meeting_needs_both_agents() {
        let tree = landmark_tree(TaskType::MeetingPoint, 1, Some(FORCED_WINDOW), None);
        tree.validate().unwrap();
        let w = world_for(&tree);
        assert_eq!(
            eval(&tree, &w, &[lit(5, 0, 0), lit(6, 0, 0)], 6),
            StageStatus::Incomplete
        );
        assert_eq!(
            eval(&tree, &w, &[lit(5, 0, 0), lit(15, 0, 1)], 15),
            StageStatus::Complete { at: 15 }
        );
        assert_eq!(
            eval(&tree, &w, &[lit(5, 0, 0), lit(16, 0, 1)], 16),
            StageStatus::FailedWindow { at: 16 }
        );
    }

    #[test]
    fn reset_window_ignores_old_events() {
        let tree = landmark_tree(TaskType::ActivateLandmarks, 2, Some(LANDMARK_WINDOW), None);
        let w = world_for(&tree);
        let ev = [lit(100, 0, 0), lit(402, 1, 0), lit(420, 0, 0)];
        let p = StageProgress::new(2);
        assert_eq!(
            stage_predicate(&tree, 1, &p, &ev, 402, 420, &w).unwrap(),
            StageStatus::Complete { at: 420 }
        );
    }

    #[test]
    fn out_of_order_query_rejected() {
        let tree = landmark_tree(TaskType::ActivateLandmarks, 1, None, None);
        let w = world_for(&tree);
        let r = stage_predicate(&tree, 2, &StageProgress::new(2), &[], 0, 0, &w);
        assert!(matches!(
            r,
            Err(Error::OutOfOrderStage {
                requested: 2,
                frontier: Some(1)
            })
        ));
    }

    #[test]
    fn final_stage_checks_end_condition() {
        let tree = landmark_tree(TaskType::ActivateLandmarks, 1, None, None);
        let mut w = world_for(&tree);
        let mut p = StageProgress::new(2);
        p.mark(1, 3).unwrap();
        let ev = [ActivationEvent {
            t: 10,
            agent: Some(AgentId(0)),
            effect: Effect::Transformed {
                entity: EntityId(7),
                from: A,
                to: C,
                via: Via::InOutMachine,
            },
        }];
        assert_eq!(
            stage_predicate(&tree, 2, &p, &ev, 4, 10, &w).unwrap(),
            StageStatus::Incomplete
        );
        w.spawn(EntityKind::Task(C), Vec2::new(100.0, 100.0));
        assert_eq!(
            stage_predicate(&tree, 2, &p, &ev, 4, 10, &w).unwrap(),
            StageStatus::Complete { at: 10 }
        );
        // Wrong product does not count.
        let wrong = [ActivationEvent {
            effect: Effect::Transformed {
                entity: EntityId(7),
                from: B,
                to: C,
                via: Via::InOutMachine,
            },
            ..ev[0]
        }];
        assert_eq!(
            stage_predicate(&tree, 2, &p, &wrong, 4, 10, &w).unwrap(),
            StageStatus::Incomplete
        );
    }
}
