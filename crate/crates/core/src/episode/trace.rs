//! Line-delimited JSON episode traces and their replay.
//!
//! A trace is one header line, one line per step and a footer line. Replay
//! rebuilds the episode from the header, feeds it the recorded actions and
//! checks rewards, events and state digests step by step.

use super::{Episode, EpisodeConfig, Mode};
use crate::reward::EpisodeOutcome;
use crate::task::TaskTree;
use crate::world::{ActionCommand, ActivationEvent};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

pub const TRACE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub version: u32,
    pub config: EpisodeConfig,
    pub seed: u64,
    pub mode: Mode,
    pub trees: Vec<TaskTree>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldEvent {
    pub world: usize,
    #[serde(flatten)]
    pub event: ActivationEvent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u64,
    /// Agent 0 then agent 1: turn, forward, grasp, activate.
    pub actions: [f64; 8],
    /// Rounded to nine significant digits.
    pub rewards: [f64; 2],
    pub events: Vec<WorldEvent>,
    pub digest: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceFooter {
    pub steps: u64,
    pub outcomes: Vec<EpisodeOutcome>,
    pub returns: [f64; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeTrace {
    pub header: TraceHeader,
    pub steps: Vec<StepRecord>,
    pub footer: Option<TraceFooter>,
}

impl EpisodeTrace {
    pub fn actions(&self, step: usize) -> [ActionCommand; 2] {
        let a = &self.steps[step].actions;
        [
            ActionCommand::from_array([a[0], a[1], a[2], a[3]]),
            ActionCommand::from_array([a[4], a[5], a[6], a[7]]),
        ]
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header(TraceHeader),
    Step(StepRecord),
    Footer(TraceFooter),
}

/// Rounds to nine significant digits.
pub fn round_reward(x: f64) -> f64 {
    format!("{x:.8e}").parse().unwrap_or(x)
}

pub fn write_trace<W: Write>(trace: &EpisodeTrace, mut sink: W) -> Result<()> {
    let mut line = |l: &Line| -> Result<()> {
        serde_json::to_writer(&mut sink, l)?;
        sink.write_all(b"\n")?;
        Ok(())
    };
    line(&Line::Header(trace.header.clone()))?;
    for s in &trace.steps {
        line(&Line::Step(s.clone()))?;
    }
    if let Some(f) = &trace.footer {
        line(&Line::Footer(f.clone()))?;
    }
    Ok(())
}

pub fn read_trace<R: BufRead>(source: R) -> Result<EpisodeTrace> {
    let mut header = None;
    let mut steps = Vec::new();
    let mut footer = None;
    for (i, raw) in source.lines().enumerate() {
        let n = i + 1;
        let raw = raw?;
        if raw.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| Error::Malformed { line: n, message };
        let parsed: Line = serde_json::from_str(&raw).map_err(|e| malformed(e.to_string()))?;
        match parsed {
            Line::Header(h) if header.is_none() && n == 1 => {
                if h.version != TRACE_VERSION {
                    return Err(malformed(format!("unsupported version {}", h.version)));
                }
                header = Some(h);
            }
            Line::Header(_) => return Err(malformed("header must be the first line".into())),
            Line::Step(s) => {
                if footer.is_some() {
                    return Err(malformed("step after footer".into()));
                }
                if s.t != steps.len() as u64 {
                    return Err(malformed(format!(
                        "expected step {}, found {}",
                        steps.len(),
                        s.t
                    )));
                }
                steps.push(s);
            }
            Line::Footer(f) => {
                if footer.is_some() {
                    return Err(malformed("second footer".into()));
                }
                footer = Some(f);
            }
        }
    }
    let header = header.ok_or(Error::Malformed {
        line: 1,
        message: "missing header".into(),
    })?;
    Ok(EpisodeTrace {
        header,
        steps,
        footer,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    pub step: u64,
    pub field: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub steps: u64,
    pub divergence: Option<Divergence>,
}

impl ReplayReport {
    pub fn verified(&self) -> bool {
        self.divergence.is_none()
    }
}

/// Re-runs the episode from the header and recorded actions.
pub fn replay_trace(trace: &EpisodeTrace) -> Result<ReplayReport> {
    let h = &trace.header;
    let config = EpisodeConfig {
        seed: h.seed,
        ..h.config.clone()
    };
    let diverged = |step: u64, field: &str| {
        Ok(ReplayReport {
            steps: step,
            divergence: Some(Divergence {
                step,
                field: field.into(),
            }),
        })
    };
    let (mut ep, _) = Episode::reset(&config)?;
    if ep.mode() != h.mode {
        return diverged(0, "mode");
    }
    if ep.slots().iter().map(|s| &s.tree).ne(h.trees.iter()) {
        return diverged(0, "trees");
    }
    for (i, rec) in trace.steps.iter().enumerate() {
        let t = i as u64;
        if ep.is_done() {
            return diverged(t, "done");
        }
        let out = ep.step(trace.actions(i))?;
        if out.rewards.map(round_reward) != rec.rewards {
            return diverged(t, "rewards");
        }
        if out.events != rec.events {
            return diverged(t, "events");
        }
        if ep.digest() != rec.digest {
            return diverged(t, "state");
        }
    }
    let steps = trace.steps.len() as u64;
    if let Some(f) = &trace.footer {
        if !ep.is_done() || f.steps != steps {
            return diverged(steps, "footer steps");
        }
        if f.outcomes != ep.outcomes() || f.returns != ep.returns().map(round_reward) {
            return diverged(steps, "footer outcomes");
        }
    }
    Ok(ReplayReport {
        steps,
        divergence: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_trace(seed: u64, limit: u64) -> EpisodeTrace {
        let cfg = EpisodeConfig {
            step_limit: limit,
            ..EpisodeConfig::default()
        }
        .with_seed(seed);
        let (mut ep, _) = Episode::reset(&cfg).unwrap();
        ep.record();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        while !ep.is_done() {
            let mut act = || ActionCommand {
                turn: rng.gen_range(-1.0..1.0),
                forward: rng.gen_range(0.0..1.0),
                grasp: rng.gen_bool(0.5),
                activate: rng.gen_bool(0.3),
            };
            let a = [act(), act()];
            ep.step(a).unwrap();
        }
        ep.take_trace().unwrap()
    }

    #[test]
    fn round_trip_and_replay() {
        let trace = random_trace(11, 120);
        let mut buf = Vec::new();
        write_trace(&trace, &mut buf).unwrap();
        let back = read_trace(buf.as_slice()).unwrap();
        assert_eq!(back, trace);
        let mut again = Vec::new();
        write_trace(&back, &mut again).unwrap();
        assert_eq!(buf, again);
        assert!(replay_trace(&back).unwrap().verified());
    }

    #[test]
    fn corrupted_action_reported_at_its_step() {
        let mut trace = random_trace(12, 80);
        trace.steps[37].actions[0] = -trace.steps[37].actions[0] + 0.5;
        let r = replay_trace(&trace).unwrap();
        assert_eq!(r.divergence.unwrap().step, 37);
    }

    #[test]
    fn malformed_line_reports_number() {
        let trace = random_trace(13, 5);
        let mut buf = Vec::new();
        write_trace(&trace, &mut buf).unwrap();
        let mut text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let broken = format!("{}\n{}\n{{not json\n", lines[0], lines[1]);
        text = broken;
        match read_trace(text.as_bytes()) {
            Err(Error::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reward_rounding() {
        assert_eq!(round_reward(0.02), 0.02);
        assert_eq!(round_reward(1.0 / 3.0), 0.333333333);
        assert_eq!(round_reward(0.0), 0.0);
    }
}
