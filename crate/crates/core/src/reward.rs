//! Stage progress tracking and the joint reward stream.
//!
//! Each completed stage `s` pays `r0 · β^(s-1)` on every following step,
//! summed over all completed stages, plus an optional one-off bonus
//! `b0 · β^(s-1)` at the step it completes. Both agents of a world always
//! receive the same amount.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub r0: f64,
    pub beta: f64,
    pub b0: f64,
    pub bonus_enabled: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            r0: 0.02,
            beta: 3.0,
            b0: 1.0,
            bonus_enabled: true,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r0 > 0.0 && self.beta > 1.0 && self.b0 >= 0.0) {
            return Err(Error::Config(format!(
                "reward requires r0 > 0, beta > 1, b0 >= 0 (got {self:?})"
            )));
        }
        Ok(())
    }

    /// Per-step reward contributed by stage `s` alone.
    pub fn stage_rate(&self, stage: usize) -> f64 {
        self.r0 * self.beta.powi(stage as i32 - 1)
    }

    pub fn stage_bonus(&self, stage: usize) -> f64 {
        if self.bonus_enabled {
            self.b0 * self.beta.powi(stage as i32 - 1)
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageProgress {
    pub depth: usize,
    pub completed: Vec<bool>,
    pub completed_at: Vec<Option<u64>>,
}

impl StageProgress {
    pub fn new(depth: usize) -> Self {
        Self {
            depth,
            completed: vec![false; depth],
            completed_at: vec![None; depth],
        }
    }

    /// First incomplete stage (1-based), or `None` when all are done.
    pub fn frontier(&self) -> Option<usize> {
        self.completed.iter().position(|c| !c).map(|i| i + 1)
    }

    pub fn highest(&self) -> usize {
        self.completed.iter().take_while(|c| **c).count()
    }

    pub fn is_complete(&self) -> bool {
        self.frontier().is_none()
    }

    /// Marks the frontier stage complete at `t`.
    pub fn mark(&mut self, stage: usize, t: u64) -> Result<()> {
        if self.frontier() != Some(stage) {
            return Err(Error::OutOfOrderStage {
                requested: stage,
                frontier: self.frontier(),
            });
        }
        if let Some(prev) = self.completed_at[..stage - 1].iter().flatten().last() {
            if t < *prev {
                return Err(Error::Config(format!(
                    "completion time {t} precedes {prev}"
                )));
            }
        }
        self.completed[stage - 1] = true;
        self.completed_at[stage - 1] = Some(t);
        Ok(())
    }
}

/// Records newly completed stages and returns the completion bonus paid to
/// each agent of the world.
pub fn on_events(
    progress: &mut StageProgress,
    completed: &[usize],
    t: u64,
    config: &RewardConfig,
) -> Result<f64> {
    let mut bonus = 0.0;
    for &s in completed {
        progress.mark(s, t)?;
        bonus += config.stage_bonus(s);
    }
    Ok(bonus)
}

/// Per-step reward for the current progress, identical for both agents.
pub fn timestep_reward(progress: &StageProgress, config: &RewardConfig) -> f64 {
    progress
        .completed
        .iter()
        .enumerate()
        .filter(|(_, c)| **c)
        .map(|(i, _)| config.stage_rate(i + 1))
        .sum()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub completed: Vec<bool>,
    pub highest: usize,
    /// Step at which each stage completed.
    #[serde(default)]
    pub completed_at: Vec<Option<u64>>,
}

pub fn episode_outcome(progress: &StageProgress) -> EpisodeOutcome {
    EpisodeOutcome {
        completed: progress.completed.clone(),
        highest: progress.highest(),
        completed_at: progress.completed_at.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(r0: f64, beta: f64, b0: f64, bonus: bool) -> RewardConfig {
        RewardConfig {
            r0,
            beta,
            b0,
            bonus_enabled: bonus,
        }
    }

    #[test]
    fn bonus_values() {
        let c = cfg(0.02, 3.0, 1.0, true);
        let mut p = StageProgress::new(3);
        assert_eq!(on_events(&mut p, &[1], 120, &c).unwrap(), 1.0);
        assert_eq!(on_events(&mut p, &[2], 130, &c).unwrap(), 3.0);
        assert_eq!(on_events(&mut p, &[3], 140, &c).unwrap(), 9.0);
        let off = cfg(0.02, 3.0, 1.0, false);
        let mut p = StageProgress::new(3);
        for s in 1..=3 {
            assert_eq!(on_events(&mut p, &[s], s as u64, &off).unwrap(), 0.0);
        }
    }

    #[test]
    fn per_step_values() {
        let c = cfg(0.02, 3.0, 1.0, true);
        let mut p = StageProgress::new(3);
        assert_eq!(timestep_reward(&p, &c), 0.0);
        p.mark(1, 5).unwrap();
        assert!((timestep_reward(&p, &c) - 0.02).abs() < 1e-15);
        p.mark(2, 6).unwrap();
        p.mark(3, 7).unwrap();
        assert!((timestep_reward(&p, &c) - 0.26).abs() < 1e-15);
    }

    #[test]
    fn outcome_flags() {
        let mut p = StageProgress::new(3);
        p.mark(1, 1).unwrap();
        assert_eq!(
            episode_outcome(&p),
            EpisodeOutcome {
                completed: vec![true, false, false],
                highest: 1,
                completed_at: vec![Some(1), None, None]
            }
        );
        p.mark(2, 2).unwrap();
        p.mark(3, 3).unwrap();
        assert_eq!(episode_outcome(&p).highest, 3);
        let mut p = StageProgress::new(6);
        for s in 1..=4 {
            p.mark(s, s as u64).unwrap();
        }
        assert_eq!(episode_outcome(&p).highest, 4);
    }

    #[test]
    fn out_of_order_mark_rejected() {
        let mut p = StageProgress::new(3);
        assert!(p.mark(2, 1).is_err());
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(cfg(0.0, 3.0, 1.0, true).validate().is_err());
        assert!(cfg(0.1, 1.0, 1.0, true).validate().is_err());
        assert!(cfg(0.1, 2.0, -1.0, true).validate().is_err());
        assert!(RewardConfig::default().validate().is_ok());
    }

    proptest! {
        #[test]
        fn exponential_dominance(beta in 2.0f64..10.0, r0 in 1e-4f64..1.0, d in 1usize..=6) {
            let c = cfg(r0, beta, 1.0, true);
            for s in 1..d {
                let below: f64 = (1..=s).map(|k| c.stage_rate(k)).sum();
                prop_assert!(c.stage_rate(s + 1) > below);
            }
        }

        #[test]
        fn monotone_cumulative_and_earlier_is_better(
            times in proptest::collection::vec(0u64..200, 1..=6),
            shift in 1u64..20,
        ) {
            let c = RewardConfig::default();
            let mut sorted = times.clone();
            sorted.sort();
            let ret = |ts: &[u64]| {
                let mut p = StageProgress::new(ts.len());
                let mut total = 0.0;
                let mut last = 0.0;
                for t in 0..250u64 {
                    let mut r = timestep_reward(&p, &c);
                    let done: Vec<usize> = ts.iter().enumerate().filter(|(_, &x)| x == t).map(|(i, _)| i + 1).collect();
                    r += on_events(&mut p, &done, t, &c).unwrap();
                    total += r;
                    assert!(total >= last);
                    last = total;
                }
                total
            };
            let base = ret(&sorted);
            let mut earlier = sorted.clone();
            earlier[0] = earlier[0].saturating_sub(shift);
            prop_assert!(ret(&earlier) >= base);
        }
    }
}
