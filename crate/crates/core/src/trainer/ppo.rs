//! Clipped-surrogate loss, advantage estimation and the per-agent update.

use super::nn::{Adam, AdamConfig, Network, PolicyParams, StepCache, POLICY_OUT, PREV_WIDTH};
use crate::episode::Mode;
use crate::world::ActionCommand;
use crate::{Error, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Linear decay to zero at `total_episodes`.
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub episodes_per_batch: usize,
    pub total_episodes: usize,
    pub lr_start: f64,
    pub lr_schedule: LrSchedule,
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: Option<f64>,
    /// Recurrent width of the symbolic network.
    pub hidden: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes_per_batch: 480,
            total_episodes: 750_000,
            lr_start: 0.00025,
            lr_schedule: LrSchedule::Linear,
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            epochs: 4,
            minibatches: 8,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: Some(0.5),
            hidden: 64,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Small batches and a short horizon for single-machine runs.
    pub fn desk() -> Self {
        Self {
            episodes_per_batch: 32,
            total_episodes: 30_000,
            lr_start: 0.001,
            minibatches: 4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.episodes_per_batch == 0 || self.total_episodes == 0 {
            return bad("batch size and total episodes must be positive");
        }
        if self.epochs == 0 || self.minibatches == 0 {
            return bad("epochs and minibatches must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lambda) {
            return bad("gamma and lambda must lie in [0, 1]");
        }
        if !(self.lr_start.is_finite() && self.lr_start >= 0.0) || !(self.clip > 0.0) {
            return bad("learning rate must be non-negative and clip positive");
        }
        if self.hidden == 0 {
            return bad("hidden width must be positive");
        }
        Ok(())
    }

    /// Learning rate after `episodes` training episodes.
    pub fn lr_at(&self, episodes: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.lr_start,
            LrSchedule::Linear => {
                self.lr_start * (1.0 - episodes as f64 / self.total_episodes as f64).max(0.0)
            }
        }
    }
}

/// One agent's experience over one episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub mode: Mode,
    /// Network inputs, one row per step.
    pub obs: Vec<f64>,
    /// Previous action and reward, one row of `PREV_WIDTH` per step.
    pub prev: Vec<f64>,
    /// Continuous samples before squashing.
    pub raw: Vec<[f64; 2]>,
    pub binary: Vec<[bool; 2]>,
    pub logp: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
}

impl Rollout {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            obs: Vec::new(),
            prev: Vec::new(),
            raw: Vec::new(),
            binary: Vec::new(),
            logp: Vec::new(),
            values: Vec::new(),
            rewards: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `ln(1 - tanh(u)^2)`, stable for large |u|.
fn log_tanh_slope(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

/// Maps raw samples to a command: turn through tanh, forward through tanh
/// rescaled to [0, 1].
pub fn squash(raw: [f64; 2], binary: [bool; 2]) -> ActionCommand {
    ActionCommand {
        turn: raw[0].tanh(),
        forward: 0.5 * (raw[1].tanh() + 1.0),
        grasp: binary[0],
        activate: binary[1],
    }
}

/// Log-density of a squashed action given the policy outputs.
pub fn log_prob(out: &[f64], log_std: [f64; 2], raw: [f64; 2], binary: [bool; 2]) -> f64 {
    let mut lp = 0.0;
    for j in 0..2 {
        let z = (raw[j] - out[j]) / log_std[j].exp();
        lp += -0.5 * z * z - log_std[j] - 0.5 * LN_2PI;
        lp -= log_tanh_slope(raw[j]);
        let l = out[2 + j];
        lp += if binary[j] { l } else { 0.0 } - softplus(l);
    }
    lp + std::f64::consts::LN_2
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActionSample {
    pub raw: [f64; 2],
    pub binary: [bool; 2],
    pub logp: f64,
}

pub fn sample_action<R: Rng>(out: &[f64], log_std: [f64; 2], rng: &mut R) -> ActionSample {
    let mut raw = [0.0; 2];
    let mut binary = [false; 2];
    for j in 0..2 {
        let n: f64 = rng.sample(StandardNormal);
        raw[j] = out[j] + log_std[j].exp() * n;
        binary[j] = rng.gen::<f64>() < sigmoid(out[2 + j]);
    }
    ActionSample {
        raw,
        binary,
        logp: log_prob(out, log_std, raw, binary),
    }
}

/// Generalized advantage estimates and return targets. A terminal step
/// bootstraps from zero, and so does the end of the sequence.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    terminal: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if rewards.len() != values.len() || rewards.len() != terminal.len() {
        return Err(Error::LengthMismatch(format!(
            "{} rewards, {} values, {} terminal flags",
            rewards.len(),
            values.len(),
            terminal.len()
        )));
    }
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut gae = 0.0;
    for t in (0..n).rev() {
        let live = if terminal[t] { 0.0 } else { 1.0 };
        let next = if t + 1 < n { values[t + 1] } else { 0.0 };
        let delta = rewards[t] + gamma * next * live - values[t];
        gae = delta + gamma * lambda * live * gae;
        adv[t] = gae;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, ret))
}

/// Loss weights; the finite-difference checks switch terms off separately.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub clip: f64,
}

impl LossWeights {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self {
            policy: 1.0,
            value: cfg.value_coef,
            entropy: cfg.entropy_coef,
            clip: cfg.clip,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
}

impl LossStats {
    fn add(&mut self, o: &LossStats) {
        self.policy += o.policy;
        self.value += o.value;
        self.entropy += o.entropy;
        self.approx_kl += o.approx_kl;
        self.clip_fraction += o.clip_fraction;
        self.grad_norm += o.grad_norm;
    }

    fn scale(&mut self, k: f64) {
        self.policy *= k;
        self.value *= k;
        self.entropy *= k;
        self.approx_kl *= k;
        self.clip_fraction *= k;
        self.grad_norm *= k;
    }
}

/// An episode prepared for the loss: the rollout plus its targets.
#[derive(Clone, Copy, Debug)]
pub struct Target<'a> {
    pub rollout: &'a Rollout,
    pub adv: &'a [f64],
    pub ret: &'a [f64],
}

#[derive(Clone, Debug)]
pub struct MinibatchLoss {
    pub loss: f64,
    pub stats: LossStats,
    /// Sum of each episode's loss terms, in the order given.
    pub per_episode: Vec<f64>,
}

/// Mean loss over every step of `batch`, and its gradient when `grad` is
/// given.
pub fn minibatch_loss(
    net: &Network,
    params: &[f64],
    batch: &[Target],
    w: LossWeights,
    grad: Option<&mut [f64]>,
) -> Result<MinibatchLoss> {
    if batch.is_empty() || batch.iter().any(|b| b.rollout.is_empty()) {
        return Err(Error::EmptyBatch);
    }
    let d = net.input_width();
    for b in batch {
        let r = b.rollout;
        let n = r.len();
        if r.obs.len() != n * d
            || r.prev.len() != n * PREV_WIDTH
            || [
                r.raw.len(),
                r.binary.len(),
                r.logp.len(),
                b.adv.len(),
                b.ret.len(),
            ] != [n; 5]
        {
            return Err(Error::LengthMismatch(
                "rollout fields disagree in length".into(),
            ));
        }
    }
    // Longest first, so live rows form a prefix at every step.
    let mut order: Vec<usize> = (0..batch.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(batch[i].rollout.len()));
    let t_max = batch[order[0]].rollout.len();
    let mut inputs = Vec::with_capacity(t_max);
    for t in 0..t_max {
        let live: Vec<usize> = order
            .iter()
            .copied()
            .take_while(|&i| batch[i].rollout.len() > t)
            .collect();
        let mut x = Vec::with_capacity(live.len() * d);
        let mut prev = Vec::with_capacity(live.len() * PREV_WIDTH);
        for &i in &live {
            let r = batch[i].rollout;
            x.extend_from_slice(&r.obs[t * d..(t + 1) * d]);
            prev.extend_from_slice(&r.prev[t * PREV_WIDTH..(t + 1) * PREV_WIDTH]);
        }
        inputs.push((x, prev));
    }
    let caches: Vec<StepCache> = net.forward_seq(params, &inputs)?;
    let ls_range = net.log_std_range();
    let log_std = [params[ls_range.start], params[ls_range.start + 1]];
    let sigma = [log_std[0].exp(), log_std[1].exp()];
    let steps: usize = batch.iter().map(|b| b.rollout.len()).sum();
    let inv = 1.0 / steps as f64;

    let mut stats = LossStats::default();
    let mut per_episode = vec![0.0; batch.len()];
    let mut dpi = Vec::with_capacity(t_max);
    let mut dv = Vec::with_capacity(t_max);
    let mut dlog_std = [0.0; 2];
    for (t, cache) in caches.iter().enumerate() {
        let mut gp = vec![0.0; cache.rows * POLICY_OUT];
        let mut gv = vec![0.0; cache.rows];
        for (row, &i) in order.iter().take(cache.rows).enumerate() {
            let (r, adv, ret) = (batch[i].rollout, batch[i].adv[t], batch[i].ret[t]);
            let out = &cache.pi_out[row * POLICY_OUT..(row + 1) * POLICY_OUT];
            let (raw, bin) = (r.raw[t], r.binary[t]);
            let logp = log_prob(out, log_std, raw, bin);
            let log_ratio = logp - r.logp[t];
            let ratio = log_ratio.exp();
            let clipped = ratio.clamp(1.0 - w.clip, 1.0 + w.clip);
            let surrogate = (ratio * adv).min(clipped * adv);
            // The gradient flows only through the unclipped branch.
            let dsurr_dlogp = if ratio * adv <= clipped * adv {
                ratio * adv
            } else {
                0.0
            };
            if (ratio - 1.0).abs() > w.clip {
                stats.clip_fraction += inv;
            }
            stats.approx_kl += inv * ((ratio - 1.0) - log_ratio);

            let mut entropy = 0.0;
            for j in 0..2 {
                entropy += 0.5 * (1.0 + LN_2PI) + log_std[j];
                let l = out[2 + j];
                let p = sigmoid(l);
                entropy += softplus(l) - l * p;
            }
            let value = cache.v_out[row];
            let verr = value - ret;
            let term = -w.policy * surrogate + w.value * 0.5 * verr * verr - w.entropy * entropy;
            per_episode[i] += term;
            stats.policy -= inv * surrogate;
            stats.value += inv * 0.5 * verr * verr;
            stats.entropy += inv * entropy;

            // d(term)/d(logp) for the policy part.
            let dl = -w.policy * dsurr_dlogp * inv;
            let g = &mut gp[row * POLICY_OUT..(row + 1) * POLICY_OUT];
            for j in 0..2 {
                let diff = raw[j] - out[j];
                let var = sigma[j] * sigma[j];
                g[j] = dl * diff / var;
                dlog_std[j] += dl * (diff * diff / var - 1.0) - w.entropy * inv;
                let l = out[2 + j];
                let p = sigmoid(l);
                let target = if bin[j] { 1.0 } else { 0.0 };
                // Entropy of a Bernoulli in its log-odds: dH/dl = -l p (1 - p).
                g[2 + j] = dl * (target - p) + w.entropy * inv * l * p * (1.0 - p);
            }
            gv[row] = w.value * verr * inv;
        }
        dpi.push(gp);
        dv.push(gv);
    }
    let loss: f64 = per_episode.iter().sum::<f64>() * inv;
    if !loss.is_finite() {
        return Err(Error::NonFinite);
    }
    if let Some(g) = grad {
        net.backward_seq(params, &caches, &dpi, &dv, g);
        g[ls_range.start] += dlog_std[0];
        g[ls_range.start + 1] += dlog_std[1];
    }
    Ok(MinibatchLoss {
        loss,
        stats,
        per_episode,
    })
}

/// Advantages (normalized over the whole batch) and return targets for
/// each rollout.
pub fn prepare_targets(
    rollouts: &[Rollout],
    cfg: &TrainConfig,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let mut advs = Vec::with_capacity(rollouts.len());
    let mut rets = Vec::with_capacity(rollouts.len());
    for r in rollouts {
        let mut terminal = vec![false; r.len()];
        if let Some(last) = terminal.last_mut() {
            *last = true;
        }
        let (a, ret) = compute_gae(&r.rewards, &r.values, &terminal, cfg.gamma, cfg.lambda)?;
        advs.push(a);
        rets.push(ret);
    }
    let n: usize = advs.iter().map(Vec::len).sum();
    if n > 0 {
        let mean = advs.iter().flatten().sum::<f64>() / n as f64;
        let var = advs
            .iter()
            .flatten()
            .map(|a| (a - mean) * (a - mean))
            .sum::<f64>()
            / n as f64;
        let sd = var.sqrt() + 1e-8;
        for a in advs.iter_mut().flatten() {
            *a = (*a - mean) / sd;
        }
    }
    Ok((advs, rets))
}

/// Several epochs of minibatched updates on one agent's own rollouts.
/// Minibatches are drawn over whole episodes.
pub fn ppo_update<R: Rng>(
    net: &Network,
    params: &mut PolicyParams,
    opt: &mut Adam,
    rollouts: &[Rollout],
    cfg: &TrainConfig,
    lr: f64,
    rng: &mut R,
) -> Result<LossStats> {
    net.check(params)?;
    if rollouts.is_empty() || rollouts.iter().all(Rollout::is_empty) {
        return Err(Error::EmptyBatch);
    }
    let (advs, rets) = prepare_targets(rollouts, cfg)?;
    let live: Vec<usize> = (0..rollouts.len())
        .filter(|&i| !rollouts[i].is_empty())
        .collect();
    let w = LossWeights::from_config(cfg);
    let mut total = LossStats::default();
    let mut count = 0;
    let mut grad = vec![0.0; net.param_count()];
    for _ in 0..cfg.epochs {
        let mut idx = live.clone();
        idx.shuffle(rng);
        let k = cfg.minibatches.min(idx.len());
        for m in 0..k {
            let part: Vec<Target> = idx[m * idx.len() / k..(m + 1) * idx.len() / k]
                .iter()
                .map(|&i| Target {
                    rollout: &rollouts[i],
                    adv: &advs[i],
                    ret: &rets[i],
                })
                .collect();
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut out = minibatch_loss(net, &params.data, &part, w, Some(&mut grad))?;
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if !norm.is_finite() {
                return Err(Error::NonFinite);
            }
            if let Some(max) = cfg.max_grad_norm {
                if norm > max {
                    let k = max / norm;
                    grad.iter_mut().for_each(|g| *g *= k);
                }
            }
            opt.apply(&mut params.data, &grad, lr);
            out.stats.grad_norm = norm;
            total.add(&out.stats);
            count += 1;
        }
    }
    total.scale(1.0 / count as f64);
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdReport {
    pub max_rel_error: f64,
    pub coordinates: usize,
    /// Worst coordinate and its block.
    pub worst: Option<(usize, String)>,
}

/// Smallest denominator for relative errors; below it the difference is
/// compared in absolute terms.
pub const FD_FLOOR: f64 = 1e-6;

/// Compares the analytic loss gradient with central differences of step
/// `1e-5` over a stratified sample of at least `coordinates` weights.
pub fn finite_difference_check<R: Rng>(
    net: &Network,
    params: &PolicyParams,
    batch: &[Target],
    w: LossWeights,
    coordinates: usize,
    rng: &mut R,
) -> Result<FdReport> {
    const H: f64 = 1e-5;
    net.check(params)?;
    let mut grad = vec![0.0; net.param_count()];
    minibatch_loss(net, &params.data, batch, w, Some(&mut grad))?;
    let blocks = net.blocks();
    let per_block = coordinates.div_ceil(blocks.len());
    let mut picks = Vec::new();
    for b in &blocks {
        let n = b.range.len();
        let take = per_block.min(n);
        let chosen = rand::seq::index::sample(rng, n, take);
        picks.extend(
            chosen
                .into_iter()
                .map(|i| (b.range.start + i, b.name.clone())),
        );
    }
    // Small blocks leave the sample short; top it up across all weights.
    let mut seen: std::collections::BTreeSet<usize> = picks.iter().map(|p| p.0).collect();
    while picks.len() < coordinates.min(net.param_count()) {
        let i = rng.gen_range(0..net.param_count());
        if seen.insert(i) {
            let name = blocks
                .iter()
                .find(|b| b.range.contains(&i))
                .map_or(String::new(), |b| b.name.clone());
            picks.push((i, name));
        }
    }
    let mut q = params.data.clone();
    let mut report = FdReport {
        max_rel_error: 0.0,
        coordinates: picks.len(),
        worst: None,
    };
    for (i, name) in picks {
        let orig = q[i];
        q[i] = orig + H;
        let up = minibatch_loss(net, &q, batch, w, None)?.loss;
        q[i] = orig - H;
        let down = minibatch_loss(net, &q, batch, w, None)?.loss;
        q[i] = orig;
        let num = (up - down) / (2.0 * H);
        let err = (num - grad[i]).abs() / num.abs().max(grad[i].abs()).max(FD_FLOOR);
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst = Some((i, name));
        }
    }
    Ok(report)
}
