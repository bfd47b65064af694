//! Evaluation runs over fixed episode seeds, and statistics over traces.

use crate::episode::{Episode, EpisodeConfig, EpisodeTrace, Mode};
use crate::oracle::{Explorer, Planner, RandomPolicy};
use crate::rng::{Domain, SeedStream};
use crate::trainer::{skill_stage, summarize, Checkpoint, EpisodeRecord, NetPolicy, Network};
use crate::world::ActionCommand;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::str::FromStr;

/// Named episode distributions used for evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalSpec {
    Training,
    NovelObjects,
    ForcedCoop,
    PressurePlate,
    OpenEnded,
    Smoke,
}

impl EvalSpec {
    pub const ALL: [EvalSpec; 6] = [
        EvalSpec::Training,
        EvalSpec::NovelObjects,
        EvalSpec::ForcedCoop,
        EvalSpec::PressurePlate,
        EvalSpec::OpenEnded,
        EvalSpec::Smoke,
    ];

    pub fn config(self) -> EpisodeConfig {
        match self {
            EvalSpec::Training => EpisodeConfig::default(),
            EvalSpec::NovelObjects => EpisodeConfig::novel_objects(),
            EvalSpec::ForcedCoop => EpisodeConfig::forced_coop(),
            EvalSpec::PressurePlate => EpisodeConfig::pressure_plate(),
            EvalSpec::OpenEnded => EpisodeConfig::open_ended(),
            EvalSpec::Smoke => EpisodeConfig::smoke(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EvalSpec::Training => "training",
            EvalSpec::NovelObjects => "novel-objects",
            EvalSpec::ForcedCoop => "forced-coop",
            EvalSpec::PressurePlate => "pressure-plate",
            EvalSpec::OpenEnded => "open-ended",
            EvalSpec::Smoke => "smoke",
        }
    }
}

impl FromStr for EvalSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EvalSpec::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown evaluation spec `{s}`")))
    }
}

pub enum PolicySource {
    Checkpoint(Box<Checkpoint>),
    Scripted,
    BruteForce,
    Random,
}

impl PolicySource {
    pub fn name(&self) -> &'static str {
        match self {
            PolicySource::Checkpoint(_) => "checkpoint",
            PolicySource::Scripted => "scripted",
            PolicySource::BruteForce => "bruteforce",
            PolicySource::Random => "random",
        }
    }
}

enum Driver<'a> {
    Net(NetPolicy<'a>),
    Planner(Planner),
    Explorer(Explorer),
    Random(RandomPolicy),
}

impl Driver<'_> {
    fn act(
        &mut self,
        ep: &Episode,
        obs: &[crate::episode::Observation; 2],
    ) -> Result<[ActionCommand; 2]> {
        Ok(match self {
            Driver::Net(p) => p.act(obs)?,
            Driver::Planner(p) => p.act(ep),
            Driver::Explorer(p) => p.act(ep),
            Driver::Random(p) => p.act(),
        })
    }
}

/// Plays one episode with `source`, recording its trace.
pub fn play_episode(
    source: &PolicySource,
    net: Option<&Network>,
    config: &EpisodeConfig,
) -> Result<(EpisodeRecord, EpisodeTrace)> {
    let (mut ep, mut obs) = Episode::reset(config)?;
    ep.record();
    let mut driver = match source {
        PolicySource::Checkpoint(ck) => {
            let net =
                net.ok_or_else(|| Error::Config("checkpoint policy needs its network".into()))?;
            Driver::Net(NetPolicy::new(
                net,
                [&ck.params[0], &ck.params[1]],
                config.seed,
            )?)
        }
        PolicySource::Scripted => Driver::Planner(Planner::new()),
        PolicySource::BruteForce => Driver::Explorer(Explorer::new()),
        PolicySource::Random => Driver::Random(RandomPolicy::new(
            SeedStream::new(config.seed).rng(Domain::Policy, 0),
        )),
    };
    while !ep.is_done() {
        let a = driver.act(&ep, &obs)?;
        obs = ep.step(a)?.observations;
    }
    let record = EpisodeRecord {
        seed: config.seed,
        mode: ep.mode(),
        steps: ep.t(),
        outcomes: [
            ep.outcome_for(crate::world::AgentId(0)),
            ep.outcome_for(crate::world::AgentId(1)),
        ],
        returns: ep.returns(),
    };
    let trace = ep.take_trace().expect("recording was started");
    Ok((record, trace))
}

/// Wilson score interval at 95%.
pub fn wilson_interval(successes: usize, n: usize) -> [f64; 2] {
    if n == 0 {
        return [0.0, 1.0];
    }
    let z = 1.959_963_984_540_054;
    let n = n as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let center = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    [(center - half).max(0.0), (center + half).min(1.0)]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub stage: usize,
    pub bin_width: u64,
    pub counts: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub episodes: usize,
    pub depth: usize,
    pub stage_success: Vec<f64>,
    pub stage_ci: Vec<[f64; 2]>,
    pub single_stage_success: Option<Vec<f64>>,
    pub skill_stage: usize,
    pub agent_single_success: [Option<f64>; 2],
    pub skill_difference: Option<f64>,
    pub mean_steps: f64,
    /// Steps to complete each stage, over the agent-episodes that did.
    pub completion_steps: Vec<Histogram>,
}

const HISTOGRAM_BINS: u64 = 20;

fn stats_from_records(
    records: &[EpisodeRecord],
    depth: usize,
    step_limit: u64,
) -> Result<StatsReport> {
    if records.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let s = summarize(records, depth);
    let samples = 2 * records.len();
    let stage_ci = s
        .stage_success
        .iter()
        .map(|r| wilson_interval((r * samples as f64).round() as usize, samples))
        .collect();
    let bin_width = step_limit.div_ceil(HISTOGRAM_BINS).max(1);
    let completion_steps = (0..depth)
        .map(|k| {
            let mut counts = vec![0; HISTOGRAM_BINS as usize];
            for o in records.iter().flat_map(|r| r.outcomes.iter()) {
                if let Some(Some(t)) = o.completed_at.get(k) {
                    let bin = ((t + 1) / bin_width).min(HISTOGRAM_BINS - 1);
                    counts[bin as usize] += 1;
                }
            }
            Histogram {
                stage: k + 1,
                bin_width,
                counts,
            }
        })
        .collect();
    Ok(StatsReport {
        episodes: records.len(),
        depth,
        stage_success: s.stage_success,
        stage_ci,
        single_stage_success: s.single_stage_success,
        skill_stage: skill_stage(depth),
        agent_single_success: s.agent_single_success,
        skill_difference: s.skill_difference,
        mean_steps: s.mean_steps,
        completion_steps,
    })
}

/// Per-agent outcomes recorded in a trace.
pub fn trace_record(trace: &EpisodeTrace) -> Result<EpisodeRecord> {
    let footer = trace.footer.as_ref().ok_or_else(|| Error::Malformed {
        line: trace.steps.len() + 2,
        message: "trace has no footer".into(),
    })?;
    let h = &trace.header;
    let pick = |i: usize| match h.mode {
        Mode::Multi => footer.outcomes.first().cloned(),
        Mode::Single => footer.outcomes.get(i).cloned(),
    };
    let (Some(a), Some(b)) = (pick(0), pick(1)) else {
        return Err(Error::Malformed {
            line: trace.steps.len() + 2,
            message: "footer lacks outcomes".into(),
        });
    };
    Ok(EpisodeRecord {
        seed: h.seed,
        mode: h.mode,
        steps: footer.steps,
        outcomes: [a, b],
        returns: footer.returns,
    })
}

/// Success rates, skill difference and completion-time histograms over a
/// set of traces that share one tree depth.
pub fn compute_stats(traces: &[EpisodeTrace]) -> Result<StatsReport> {
    let first = traces.first().ok_or(Error::EmptyBatch)?;
    let depth = first.header.config.depth;
    if traces.iter().any(|t| t.header.config.depth != depth) {
        return Err(Error::Config("traces mix tree depths".into()));
    }
    let step_limit = traces
        .iter()
        .map(|t| t.header.config.step_limit)
        .max()
        .unwrap_or(1);
    let records = traces
        .iter()
        .map(trace_record)
        .collect::<Result<Vec<_>>>()?;
    stats_from_records(&records, depth, step_limit)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub policy: String,
    pub seed: u64,
    pub config: EpisodeConfig,
    pub stats: StatsReport,
}

/// Plays `n` episodes with seeds `seed, seed + 1, ...`. Each trace is
/// handed to `on_trace` with its episode index.
pub fn run_evaluation(
    source: &PolicySource,
    config: &EpisodeConfig,
    n: usize,
    seed: u64,
    mut on_trace: impl FnMut(usize, &EpisodeTrace) -> Result<()>,
) -> Result<EvalReport> {
    config.validate()?;
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    let net = match source {
        PolicySource::Checkpoint(ck) => {
            let net = Network::new(ck.params[0].arch);
            net.check(&ck.params[0])?;
            Some(net)
        }
        _ => None,
    };
    let workers = std::thread::available_parallelism().map_or(1, |w| w.get());
    let mut records = Vec::with_capacity(n);
    // Episodes run in windows across worker threads; traces are handed on
    // in index order so output does not depend on scheduling.
    let window = workers * 4;
    let mut start = 0;
    while start < n {
        let end = (start + window).min(n);
        let play = |i: usize| {
            let cfg = config.with_seed(seed.wrapping_add(i as u64));
            play_episode(source, net.as_ref(), &cfg)
        };
        let done: Vec<Result<(EpisodeRecord, EpisodeTrace)>> = if workers == 1 {
            (start..end).map(play).collect()
        } else {
            let mut slots: Vec<Option<Result<(EpisodeRecord, EpisodeTrace)>>> =
                (start..end).map(|_| None).collect();
            std::thread::scope(|s| {
                let handles: Vec<_> = (0..workers)
                    .map(|w| {
                        let play = &play;
                        s.spawn(move || {
                            (start + w..end)
                                .step_by(workers)
                                .map(|i| (i, play(i)))
                                .collect::<Vec<_>>()
                        })
                    })
                    .collect();
                for h in handles {
                    for (i, r) in h.join().expect("evaluation worker panicked") {
                        slots[i - start] = Some(r);
                    }
                }
            });
            slots.into_iter().flatten().collect()
        };
        for (k, r) in done.into_iter().enumerate() {
            let (record, trace) = r?;
            on_trace(start + k, &trace)?;
            records.push(record);
        }
        start = end;
    }
    Ok(EvalReport {
        policy: source.name().to_string(),
        seed,
        config: config.clone(),
        stats: stats_from_records(&records, config.depth, config.step_limit)?,
    })
}
