//! Runs many episodes in lockstep so each agent's network sees one batched
//! step per environment step.

use super::nn::{Network, PolicyParams, PREV_WIDTH};
use super::ppo::{sample_action, squash, Rollout};
use crate::episode::{Episode, EpisodeConfig, Mode, Observation};
use crate::reward::EpisodeOutcome;
use crate::rng::{Domain, SeedStream};
use crate::world::{ActionCommand, AgentId};
use crate::Result;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub mode: Mode,
    pub steps: u64,
    /// Outcome as seen by each agent.
    pub outcomes: [EpisodeOutcome; 2],
    pub returns: [f64; 2],
}

#[derive(Clone, Debug, Default)]
pub struct Batch {
    /// Each agent's own rollouts, one per episode, in episode order.
    pub rollouts: [Vec<Rollout>; 2],
    pub episodes: Vec<EpisodeRecord>,
}

fn prev_row(o: &Observation) -> [f64; PREV_WIDTH] {
    let a = o.prev_action;
    [a[0], a[1], a[2], a[3], o.prev_reward]
}

struct Live {
    ep: Episode,
    obs: [Observation; 2],
    h: [Vec<f64>; 2],
    c: [Vec<f64>; 2],
    rng: [ChaCha8Rng; 2],
}

/// Plays one episode per seed with both agents driven by their own
/// networks. Action sampling for episode `seed` and agent `i` draws from
/// `SeedStream::new(seed).rng(Domain::Policy, i)`, so results do not
/// depend on how episodes are grouped.
pub fn collect_batch(
    net: &Network,
    params: [&PolicyParams; 2],
    env: &EpisodeConfig,
    seeds: &[u64],
    keep_rollouts: bool,
) -> Result<Batch> {
    net.check(params[0])?;
    net.check(params[1])?;
    let d = net.input_width();
    let hd = net.hidden();
    let mut live = Vec::with_capacity(seeds.len());
    let mut batch = Batch::default();
    for &seed in seeds {
        let (ep, obs) = Episode::reset(&env.with_seed(seed))?;
        for (i, o) in obs.iter().enumerate() {
            if o.view.len() != d {
                return Err(crate::Error::Shape(format!(
                    "observation width {} does not match network input {d}",
                    o.view.len()
                )));
            }
            if keep_rollouts {
                batch.rollouts[i].push(Rollout::new(ep.mode()));
            }
        }
        let s = SeedStream::new(seed);
        live.push(Live {
            ep,
            obs,
            h: [vec![0.0; hd], vec![0.0; hd]],
            c: [vec![0.0; hd], vec![0.0; hd]],
            rng: [s.rng(Domain::Policy, 0), s.rng(Domain::Policy, 1)],
        });
    }
    let mut active: Vec<usize> = (0..live.len()).collect();
    while !active.is_empty() {
        let rows = active.len();
        let mut cmds = vec![[ActionCommand::NULL; 2]; rows];
        for a in 0..2 {
            let mut x = Vec::with_capacity(rows * d);
            let mut prev = Vec::with_capacity(rows * PREV_WIDTH);
            let mut h = Vec::with_capacity(rows * hd);
            let mut c = Vec::with_capacity(rows * hd);
            for &e in &active {
                x.extend_from_slice(&live[e].obs[a].view);
                prev.extend_from_slice(&prev_row(&live[e].obs[a]));
                h.extend_from_slice(&live[e].h[a]);
                c.extend_from_slice(&live[e].c[a]);
            }
            let p = params[a];
            let step = net.step(&p.data, &x, &prev, &h, &c, rows)?;
            let log_std = p.log_std(net);
            for (r, &e) in active.iter().enumerate() {
                let l = &mut live[e];
                let out = &step.pi_out[r * 4..(r + 1) * 4];
                let s = sample_action(out, log_std, &mut l.rng[a]);
                cmds[r][a] = squash(s.raw, s.binary);
                l.h[a].copy_from_slice(&step.h[r * hd..(r + 1) * hd]);
                l.c[a].copy_from_slice(&step.c[r * hd..(r + 1) * hd]);
                if keep_rollouts {
                    let ro = &mut batch.rollouts[a][e];
                    ro.obs.extend_from_slice(&x[r * d..(r + 1) * d]);
                    ro.prev
                        .extend_from_slice(&prev[r * PREV_WIDTH..(r + 1) * PREV_WIDTH]);
                    ro.raw.push(s.raw);
                    ro.binary.push(s.binary);
                    ro.logp.push(s.logp);
                    ro.values.push(step.v_out[r]);
                }
            }
        }
        let mut still = Vec::with_capacity(rows);
        for (r, &e) in active.iter().enumerate() {
            let out = live[e].ep.step(cmds[r])?;
            if keep_rollouts {
                for a in 0..2 {
                    batch.rollouts[a][e].rewards.push(out.rewards[a]);
                }
            }
            live[e].obs = out.observations;
            if !out.done {
                still.push(e);
            }
        }
        active = still;
    }
    batch.episodes = live
        .iter()
        .zip(seeds)
        .map(|(l, &seed)| EpisodeRecord {
            seed,
            mode: l.ep.mode(),
            steps: l.ep.t(),
            outcomes: [l.ep.outcome_for(AgentId(0)), l.ep.outcome_for(AgentId(1))],
            returns: l.ep.returns(),
        })
        .collect();
    Ok(batch)
}

/// Drives one episode's agents from their networks, one step at a time.
/// Uses the same sampling streams as `collect_batch`.
#[derive(Clone, Debug)]
pub struct NetPolicy<'a> {
    net: &'a Network,
    params: [&'a PolicyParams; 2],
    h: [Vec<f64>; 2],
    c: [Vec<f64>; 2],
    rng: [ChaCha8Rng; 2],
}

impl<'a> NetPolicy<'a> {
    pub fn new(net: &'a Network, params: [&'a PolicyParams; 2], seed: u64) -> Result<Self> {
        net.check(params[0])?;
        net.check(params[1])?;
        let hd = net.hidden();
        let s = SeedStream::new(seed);
        Ok(Self {
            net,
            params,
            h: [vec![0.0; hd], vec![0.0; hd]],
            c: [vec![0.0; hd], vec![0.0; hd]],
            rng: [s.rng(Domain::Policy, 0), s.rng(Domain::Policy, 1)],
        })
    }

    pub fn act(&mut self, obs: &[Observation; 2]) -> Result<[ActionCommand; 2]> {
        let mut out = [ActionCommand::NULL; 2];
        for a in 0..2 {
            let p = self.params[a];
            let step = self.net.step(
                &p.data,
                &obs[a].view,
                &prev_row(&obs[a]),
                &self.h[a],
                &self.c[a],
                1,
            )?;
            let s = sample_action(&step.pi_out, p.log_std(self.net), &mut self.rng[a]);
            out[a] = squash(s.raw, s.binary);
            self.h[a] = step.h;
            self.c[a] = step.c;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::nn::Arch;
    use rand::SeedableRng;

    // Stepping episodes one by one reproduces the lockstep batch.
    #[test]
    fn single_episode_policy_matches_batch() {
        let env = EpisodeConfig {
            step_limit: 40,
            ..EpisodeConfig::smoke()
        };
        let net = Network::new(Arch::symbolic(8));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = [net.init(&mut rng), net.init(&mut rng)];
        let seeds = [5, 6, 7];
        let b = collect_batch(&net, [&p[0], &p[1]], &env, &seeds, false).unwrap();
        for (k, &seed) in seeds.iter().enumerate() {
            let (mut ep, mut obs) = Episode::reset(&env.with_seed(seed)).unwrap();
            let mut pol = NetPolicy::new(&net, [&p[0], &p[1]], seed).unwrap();
            while !ep.is_done() {
                obs = ep.step(pol.act(&obs).unwrap()).unwrap().observations;
            }
            assert_eq!(ep.returns(), b.episodes[k].returns);
        }
    }
}
