//! Decentralized recurrent PPO: two independent networks, each updated only
//! on its own agent's experience.

mod checkpoint;
mod collect;
mod metrics;
pub mod nn;
pub mod ppo;

pub use checkpoint::{config_hash, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use collect::{collect_batch, Batch, EpisodeRecord, NetPolicy};
pub use metrics::{skill_stage, summarize, SuccessSummary};
pub use nn::{
    Adam, AdamConfig, Arch, Network, PolicyParams, StepCache, HEAD_WIDTH, POLICY_OUT, PREV_WIDTH,
};
pub use ppo::{
    compute_gae, finite_difference_check, log_prob, minibatch_loss, ppo_update, prepare_targets,
    sample_action, squash, FdReport, LossStats, LossWeights, LrSchedule, Rollout, Target,
    TrainConfig, FD_FLOOR,
};

use crate::episode::{EpisodeConfig, ObservationMode};
use crate::rng::{Domain, SeedStream};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Network shape for an environment: the pixel stack for pixel
/// observations, the narrow symbolic one otherwise.
pub fn arch_for(env: &EpisodeConfig, cfg: &TrainConfig) -> Arch {
    match env.observation {
        ObservationMode::Symbolic => Arch::symbolic(cfg.hidden),
        ObservationMode::Pixel => Arch::pixel(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchMetrics {
    pub batch: usize,
    /// Episodes trained on so far, including this batch.
    pub episodes: usize,
    pub lr: f64,
    pub success: SuccessSummary,
    pub losses: [Option<LossStats>; 2],
}

#[derive(Clone, Debug)]
pub struct Trainer {
    pub env: EpisodeConfig,
    pub cfg: TrainConfig,
    pub net: Network,
    pub params: [PolicyParams; 2],
    pub opt: [Adam; 2],
    pub episodes_done: usize,
    pub batches_done: usize,
    /// Where to write the last good parameters if training diverges.
    pub failure_checkpoint: Option<PathBuf>,
}

impl Trainer {
    pub fn new(env: EpisodeConfig, cfg: TrainConfig) -> Result<Self> {
        env.validate()?;
        cfg.validate()?;
        let net = Network::new(arch_for(&env, &cfg));
        let seeds = SeedStream::new(cfg.seed);
        // Separate streams: the two networks start from different weights.
        let params = [
            net.init(&mut seeds.rng(Domain::Init, 0)),
            net.init(&mut seeds.rng(Domain::Init, 1)),
        ];
        let opt = [
            Adam::new(cfg.adam, net.param_count()),
            Adam::new(cfg.adam, net.param_count()),
        ];
        Ok(Self {
            env,
            cfg,
            net,
            params,
            opt,
            episodes_done: 0,
            batches_done: 0,
            failure_checkpoint: None,
        })
    }

    /// Seeds of the episodes in batch `b`.
    pub fn episode_seeds(&self, b: usize) -> Vec<u64> {
        let root = SeedStream::new(self.cfg.seed);
        let n = self.cfg.episodes_per_batch;
        (0..n)
            .map(|i| root.child(Domain::Collect, (b * n + i) as u64).root())
            .collect()
    }

    pub fn collect(&self) -> Result<Batch> {
        collect_batch(
            &self.net,
            [&self.params[0], &self.params[1]],
            &self.env,
            &self.episode_seeds(self.batches_done),
            true,
        )
    }

    /// Updates each agent that has experience, from that experience only.
    pub fn update(&mut self, rollouts: &[Vec<Rollout>; 2]) -> Result<[Option<LossStats>; 2]> {
        let lr = self.cfg.lr_at(self.episodes_done);
        let root = SeedStream::new(self.cfg.seed).child(Domain::Shuffle, self.batches_done as u64);
        let mut out = [None, None];
        for a in 0..2 {
            if rollouts[a].iter().all(Rollout::is_empty) {
                continue;
            }
            let mut rng = root.rng(Domain::Shuffle, a as u64);
            out[a] = Some(ppo_update(
                &self.net,
                &mut self.params[a],
                &mut self.opt[a],
                &rollouts[a],
                &self.cfg,
                lr,
                &mut rng,
            )?);
        }
        Ok(out)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config_hash: config_hash(&self.cfg, &self.env),
            episodes_done: self.episodes_done as u64,
            params: self.params.clone(),
        }
    }

    /// Collects one batch and updates both agents.
    pub fn run_batch(&mut self) -> Result<BatchMetrics> {
        let batch = self.collect()?;
        let lr = self.cfg.lr_at(self.episodes_done);
        let before = self.params.clone();
        let losses = match self.update(&batch.rollouts) {
            Ok(l) => l,
            Err(Error::NonFinite) => {
                self.params = before;
                if let Some(path) = &self.failure_checkpoint {
                    self.checkpoint().save(path)?;
                }
                return Err(Error::NonFinite);
            }
            Err(e) => return Err(e),
        };
        self.episodes_done += batch.episodes.len();
        self.batches_done += 1;
        Ok(BatchMetrics {
            batch: self.batches_done - 1,
            episodes: self.episodes_done,
            lr,
            success: summarize(&batch.episodes, self.env.depth),
            losses,
        })
    }

    /// Trains until `total_episodes` or until `on_batch` returns false.
    pub fn train(
        &mut self,
        mut on_batch: impl FnMut(&BatchMetrics) -> bool,
    ) -> Result<Vec<BatchMetrics>> {
        let mut log = Vec::new();
        while self.episodes_done < self.cfg.total_episodes {
            let m = self.run_batch()?;
            let go = on_batch(&m);
            log.push(m);
            if !go {
                break;
            }
        }
        Ok(log)
    }
}

/// Plays `seeds` with fixed parameters and summarizes the outcomes.
pub fn evaluate_params(
    net: &Network,
    params: [&PolicyParams; 2],
    env: &EpisodeConfig,
    seeds: &[u64],
) -> Result<SuccessSummary> {
    let b = collect_batch(net, params, env, seeds, false)?;
    Ok(summarize(&b.episodes, env.depth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> (EpisodeConfig, TrainConfig) {
        let env = EpisodeConfig {
            step_limit: 30,
            ..EpisodeConfig::smoke()
        };
        let cfg = TrainConfig {
            episodes_per_batch: 4,
            total_episodes: 12,
            hidden: 8,
            seed: 3,
            ..TrainConfig::desk()
        };
        (env, cfg)
    }

    #[test]
    fn seeded_runs_repeat() {
        let (env, cfg) = tiny();
        let run = || {
            let mut t = Trainer::new(env.clone(), cfg.clone()).unwrap();
            let log = t.train(|_| true).unwrap();
            (log, t.params)
        };
        let (a, pa) = run();
        let (b, pb) = run();
        assert_eq!(a.len(), 3);
        assert_eq!(a, b);
        assert_eq!(pa, pb);
    }

    #[test]
    fn other_agent_experience_is_irrelevant() {
        let (env, cfg) = tiny();
        let mut full = Trainer::new(env, cfg).unwrap();
        let batch = full.collect().unwrap();
        let mut alone = full.clone();
        full.update(&batch.rollouts).unwrap();
        let only_zero = [batch.rollouts[0].clone(), Vec::new()];
        let l = alone.update(&only_zero).unwrap();
        assert!(l[1].is_none());
        assert_eq!(full.params[0].data, alone.params[0].data);
        assert_ne!(full.params[1].data, alone.params[1].data);
    }

    #[test]
    fn joint_rewards_in_shared_worlds() {
        let (env, cfg) = tiny();
        let t = Trainer::new(
            EpisodeConfig {
                p_multi: 1.0,
                ..env
            },
            cfg,
        )
        .unwrap();
        let b = t.collect().unwrap();
        for (r0, r1) in b.rollouts[0].iter().zip(&b.rollouts[1]) {
            assert_eq!(r0.rewards, r1.rewards);
        }
    }

    #[test]
    fn networks_share_nothing() {
        let (env, cfg) = tiny();
        let t = Trainer::new(env, cfg).unwrap();
        assert_ne!(t.params[0].data, t.params[1].data);
        assert_ne!(t.params[0].data.as_ptr(), t.params[1].data.as_ptr());
    }
}
