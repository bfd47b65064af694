//! Per-batch success statistics from episode records.

use super::collect::EpisodeRecord;
use crate::episode::Mode;
use serde::{Deserialize, Serialize};

/// Stage used for the per-agent comparison: the third, or the last one in
/// shallower trees.
pub fn skill_stage(depth: usize) -> usize {
    depth.clamp(1, 3)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SuccessSummary {
    pub episodes: usize,
    /// Fraction of agent-episodes that completed each stage.
    pub stage_success: Vec<f64>,
    /// The same over single-agent episodes only.
    pub single_stage_success: Option<Vec<f64>>,
    /// Each agent's single-agent rate at the skill stage.
    pub agent_single_success: [Option<f64>; 2],
    pub skill_difference: Option<f64>,
    /// Full-tree completion over single-agent episodes.
    pub single_success: Option<f64>,
    pub mean_steps: f64,
}

fn rates<'a>(
    outcomes: impl Iterator<Item = &'a crate::reward::EpisodeOutcome>,
    depth: usize,
) -> Option<Vec<f64>> {
    let mut counts = vec![0usize; depth];
    let mut n = 0;
    for o in outcomes {
        n += 1;
        for (c, done) in counts.iter_mut().zip(&o.completed) {
            *c += usize::from(*done);
        }
    }
    (n > 0).then(|| counts.into_iter().map(|c| c as f64 / n as f64).collect())
}

pub fn summarize(records: &[EpisodeRecord], depth: usize) -> SuccessSummary {
    let all = records.iter().flat_map(|r| r.outcomes.iter());
    let single: Vec<&EpisodeRecord> = records.iter().filter(|r| r.mode == Mode::Single).collect();
    let k = skill_stage(depth) - 1;
    let agent = |i: usize| rates(single.iter().map(|r| &r.outcomes[i]), depth).map(|v| v[k]);
    let agent_single_success = [agent(0), agent(1)];
    let single_stage_success = rates(single.iter().flat_map(|r| r.outcomes.iter()), depth);
    SuccessSummary {
        episodes: records.len(),
        stage_success: rates(all, depth).unwrap_or_else(|| vec![0.0; depth]),
        single_success: single_stage_success.as_ref().map(|v| v[depth - 1]),
        single_stage_success,
        skill_difference: match agent_single_success {
            [Some(a), Some(b)] => Some((a - b).abs()),
            _ => None,
        },
        agent_single_success,
        mean_steps: if records.is_empty() {
            0.0
        } else {
            records.iter().map(|r| r.steps as f64).sum::<f64>() / records.len() as f64
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::EpisodeOutcome;

    fn rec(mode: Mode, a: &[bool], b: &[bool]) -> EpisodeRecord {
        let out = |c: &[bool]| EpisodeOutcome {
            completed: c.to_vec(),
            highest: c.iter().take_while(|x| **x).count(),
            completed_at: c.iter().map(|d| d.then_some(5)).collect(),
        };
        EpisodeRecord {
            seed: 0,
            mode,
            steps: 10,
            outcomes: [out(a), out(b)],
            returns: [0.0; 2],
        }
    }

    #[test]
    fn one_sided_skill() {
        let recs = vec![rec(Mode::Single, &[true, true, true], &[true, false, false]); 4];
        let s = summarize(&recs, 3);
        assert_eq!(s.skill_difference, Some(1.0));
        assert_eq!(s.stage_success, vec![1.0, 0.5, 0.5]);
    }

    #[test]
    fn multi_only_has_no_skill_difference() {
        let recs = vec![rec(Mode::Multi, &[true], &[true])];
        let s = summarize(&recs, 1);
        assert_eq!(s.skill_difference, None);
        assert_eq!(s.single_success, None);
        assert_eq!(s.stage_success, vec![1.0]);
    }
}
