//! `cotask`: generate trees, play, train, evaluate, replay and summarize.

mod config;
mod view;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use config::RunConfig;
use cotask::episode::{read_trace, replay_trace, write_trace, Episode, EpisodeTrace};
use cotask::eval::{
    compute_stats, play_episode, run_evaluation, trace_record, EvalSpec, PolicySource, StatsReport,
};
use cotask::trainer::{config_hash, Checkpoint, Network, TrainConfig, Trainer};
use serde_json::json;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Bad invocation or configuration; exits with status 1.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// A run that completed but missed its acceptance gate; exits with status 3.
#[derive(Debug)]
struct GateFailure(String);

impl std::fmt::Display for GateFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for GateFailure {}

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Usage(msg.into()).into())
}

#[derive(Parser)]
#[command(
    name = "cotask",
    version,
    about = "Two-agent task-tree environment: generation, play, training and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Starting episode distribution: training, novel-objects, forced-coop,
    /// pressure-plate, open-ended or smoke.
    #[arg(long)]
    spec: Option<String>,
    /// TOML file with `[episode]` and `[train]` sections.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one field, e.g. `episode.depth=4` or `lr_start=0.001`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    step_limit: Option<u64>,
    #[arg(long)]
    p_multi: Option<f64>,
    /// Use forced-cooperation subtasks.
    #[arg(long)]
    forced: bool,
    /// Object pool: training or novel.
    #[arg(long)]
    pool: Option<String>,
    /// Observation form: symbolic or pixel.
    #[arg(long)]
    observation: Option<String>,
}

impl ConfigArgs {
    fn spec(&self, default: EvalSpec) -> Result<EvalSpec> {
        match &self.spec {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|e: cotask::Error| Usage(e.to_string()).into()),
        }
    }

    fn resolve(&self, default: EvalSpec, train: TrainConfig) -> Result<RunConfig> {
        let base = RunConfig {
            episode: self.spec(default)?.config(),
            train,
        };
        let mut sets = self.set.clone();
        let mut flag = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                sets.push(format!("episode.{k}={v}"));
            }
        };
        flag("depth", self.depth.map(|v| v.to_string()));
        flag("step_limit", self.step_limit.map(|v| v.to_string()));
        flag("p_multi", self.p_multi.map(|v| format!("{v:?}")));
        flag("forced", self.forced.then(|| "true".into()));
        flag("pool", self.pool.clone());
        flag("observation", self.observation.clone());
        config::build(&base, self.config.as_deref(), &sets)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PlayMode {
    Scripted,
    Bruteforce,
    Random,
    Checkpoint,
    Human,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Policy {
    Scripted,
    Bruteforce,
    Random,
    Checkpoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TrainPreset {
    /// Small batches and a higher learning rate for one machine.
    Desk,
    /// The full-scale schedule.
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Print the task trees sampled for a range of episode seeds.
    Gen {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: u64,
        /// Human-readable stages instead of JSON records.
        #[arg(long)]
        describe: bool,
    },
    /// Play one episode and print its outcome.
    Play {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum, default_value_t = PlayMode::Scripted)]
        mode: PlayMode,
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the episode trace here.
        #[arg(long, value_name = "FILE")]
        trace: Option<PathBuf>,
        /// Print the final world view.
        #[arg(long)]
        show: bool,
    },
    /// Train both agents' policies.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum, default_value_t = TrainPreset::Desk)]
        preset: TrainPreset,
        #[arg(long)]
        seed: Option<u64>,
        /// Total training episodes.
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,
        /// Where to save the last good parameters if training diverges.
        #[arg(long, value_name = "FILE")]
        failure_checkpoint: Option<PathBuf>,
        /// Continue from a checkpoint written with the same configuration.
        #[arg(long, value_name = "FILE")]
        resume: Option<PathBuf>,
        /// Per-batch metrics as JSON lines.
        #[arg(long, value_name = "FILE")]
        metrics: Option<PathBuf>,
        /// Stop once the mean single-agent success of the last 5 batches
        /// reaches this rate.
        #[arg(long, value_name = "RATE")]
        stop_at: Option<f64>,
        #[arg(long)]
        quiet: bool,
    },
    /// Evaluate a policy over fixed seeds.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum, default_value_t = Policy::Scripted)]
        policy: Policy,
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for one trace file per episode.
        #[arg(long, value_name = "DIR")]
        traces: Option<PathBuf>,
        /// Line-delimited report: one record per episode, then the summary.
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
        /// Require a minimum success rate, e.g. `3=0.95`. Repeatable.
        #[arg(long, value_name = "STAGE=RATE")]
        gate: Vec<String>,
    },
    /// Re-run traces and check they reproduce exactly.
    Replay {
        /// Trace files or directories of them.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Success rates and skill difference over a set of traces.
    Stats {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Tab-separated tables instead of the text summary.
        #[arg(long)]
        table: bool,
        /// Also write the statistics as JSON.
        #[arg(long, value_name = "FILE")]
        json: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<Usage>() {
                ExitCode::from(1)
            } else if e.is::<GateFailure>() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

/// Output piped into a reader that closed early, e.g. `head`.
fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<std::io::Error>()
            .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
    })
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Gen {
            cfg,
            seed,
            count,
            describe,
        } => gen(&cfg, seed, count, describe),
        Command::Play {
            cfg,
            mode,
            checkpoint,
            seed,
            trace,
            show,
        } => play(
            &cfg,
            mode,
            checkpoint.as_deref(),
            seed,
            trace.as_deref(),
            show,
        ),
        Command::Train {
            cfg,
            preset,
            seed,
            episodes,
            checkpoint,
            failure_checkpoint,
            resume,
            metrics,
            stop_at,
            quiet,
        } => {
            let base = match preset {
                TrainPreset::Desk => TrainConfig::desk(),
                TrainPreset::Full => TrainConfig::default(),
            };
            let mut run = cfg.resolve(EvalSpec::Smoke, base)?;
            if let Some(s) = seed {
                run.train.seed = s;
            }
            if let Some(n) = episodes {
                run.train.total_episodes = n;
            }
            run.train.validate().map_err(|e| Usage(e.to_string()))?;
            train(
                run,
                TrainPaths {
                    checkpoint,
                    failure: failure_checkpoint,
                    resume,
                    metrics,
                },
                stop_at,
                quiet,
            )
        }
        Command::Eval {
            cfg,
            policy,
            checkpoint,
            episodes,
            seed,
            traces,
            report,
            gate,
        } => eval(
            &cfg,
            policy,
            checkpoint.as_deref(),
            episodes,
            seed,
            traces.as_deref(),
            report.as_deref(),
            &gate,
        ),
        Command::Replay { paths } => replay(&paths),
        Command::Stats { paths, table, json } => stats(&paths, table, json.as_deref()),
    }
}

fn gen(cfg: &ConfigArgs, seed: u64, count: u64, describe: bool) -> Result<()> {
    let run = cfg.resolve(EvalSpec::Training, TrainConfig::desk())?;
    let mut out = std::io::stdout().lock();
    for i in 0..count {
        let s = seed.wrapping_add(i);
        let (ep, _) = Episode::reset(&run.episode.with_seed(s))?;
        if describe {
            writeln!(out, "seed {s} ({:?})", ep.mode())?;
            for (k, slot) in ep.slots().iter().enumerate() {
                writeln!(out, "world {k}:")?;
                write!(out, "{}", view::describe_tree(&slot.tree))?;
            }
        } else {
            let trees: Vec<_> = ep.slots().iter().map(|s| &s.tree).collect();
            let rec = json!({"seed": s, "mode": ep.mode(), "trees": trees});
            writeln!(out, "{}", serde_json::to_string(&rec)?)?;
        }
    }
    Ok(())
}

fn load_checkpoint(path: Option<&Path>) -> Result<PolicySource> {
    let path = match path {
        Some(p) => p,
        None => return usage("the checkpoint policy needs --checkpoint FILE"),
    };
    let ck = Checkpoint::load(path)
        .with_context(|| format!("cannot load checkpoint {}", path.display()))?;
    Ok(PolicySource::Checkpoint(Box::new(ck)))
}

fn checkpoint_net(source: &PolicySource) -> Option<Network> {
    match source {
        PolicySource::Checkpoint(ck) => Some(Network::new(ck.params[0].arch)),
        _ => None,
    }
}

fn save_trace(trace: &EpisodeTrace, path: &Path) -> Result<()> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(f);
    write_trace(trace, &mut w)?;
    w.flush()?;
    Ok(())
}

fn play(
    cfg: &ConfigArgs,
    mode: PlayMode,
    checkpoint: Option<&Path>,
    seed: u64,
    trace_path: Option<&Path>,
    show: bool,
) -> Result<()> {
    let run = cfg.resolve(EvalSpec::Training, TrainConfig::desk())?;
    let config = run.episode.with_seed(seed);
    let source = match mode {
        PlayMode::Human => return play_human(&config, trace_path),
        PlayMode::Scripted => PolicySource::Scripted,
        PlayMode::Bruteforce => PolicySource::BruteForce,
        PlayMode::Random => PolicySource::Random,
        PlayMode::Checkpoint => load_checkpoint(checkpoint)?,
    };
    let net = checkpoint_net(&source);
    let (record, trace) = play_episode(&source, net.as_ref(), &config)?;
    if let Some(p) = trace_path {
        save_trace(&trace, p)?;
    }
    println!("{}", serde_json::to_string(&record)?);
    if show {
        // Rebuild the final state by replaying the recorded actions.
        let (mut ep, _) = Episode::reset(&config)?;
        for i in 0..trace.steps.len() {
            ep.step(trace.actions(i))?;
        }
        print!("{}", view::render_episode(&ep));
    }
    for (a, o) in record.outcomes.iter().enumerate() {
        println!(
            "agent {a}: {} of {} stages, return {:.3}",
            o.highest, config.depth, record.returns[a]
        );
    }
    println!("{} steps", record.steps);
    Ok(())
}

fn play_human(config: &cotask::episode::EpisodeConfig, trace_path: Option<&Path>) -> Result<()> {
    let (mut ep, _) = Episode::reset(config)?;
    ep.record();
    let mut held = [false; 2];
    let stdin = std::io::stdin();
    let mut lines = stdin.lock().lines();
    println!("{}", view::KEY_HELP);
    while !ep.is_done() {
        print!("{}> ", view::render_episode(&ep));
        std::io::stdout().flush()?;
        let Some(line) = lines.next() else { break };
        let Some(cmds) = view::parse_keys(&line?, &mut held) else {
            break;
        };
        let out = ep.step(cmds)?;
        for e in &out.events {
            println!("event: {}", serde_json::to_string(e)?);
        }
    }
    let outcomes = ep.outcomes();
    println!(
        "stopped at t = {}; stages completed per world: {:?}",
        ep.t(),
        outcomes.iter().map(|o| o.highest).collect::<Vec<_>>()
    );
    if let Some(p) = trace_path {
        if ep.is_done() {
            let trace = ep.take_trace().expect("recording was started");
            save_trace(&trace, p)?;
        } else {
            eprintln!("episode unfinished; no trace written");
        }
    }
    Ok(())
}

/// Batches between checkpoint saves.
const CHECKPOINT_EVERY: usize = 25;
/// Batches averaged for `--stop-at`.
const STOP_WINDOW: usize = 5;

struct TrainPaths {
    checkpoint: Option<PathBuf>,
    failure: Option<PathBuf>,
    resume: Option<PathBuf>,
    metrics: Option<PathBuf>,
}

fn train(run: RunConfig, paths: TrainPaths, stop_at: Option<f64>, quiet: bool) -> Result<()> {
    let mut trainer = Trainer::new(run.episode.clone(), run.train.clone())?;
    trainer.failure_checkpoint = paths.failure.clone();
    if let Some(p) = &paths.resume {
        let ck = Checkpoint::load(p)
            .with_context(|| format!("cannot load checkpoint {}", p.display()))?;
        if ck.config_hash != config_hash(&run.train, &run.episode) {
            return usage(format!(
                "{} was written with a different configuration",
                p.display()
            ));
        }
        for a in 0..2 {
            trainer.net.check(&ck.params[a])?;
        }
        trainer.params = ck.params;
        trainer.episodes_done = ck.episodes_done as usize;
        trainer.batches_done = trainer.episodes_done / run.train.episodes_per_batch;
    }
    let mut metrics = match &paths.metrics {
        Some(p) => Some(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => None,
    };
    let save = |trainer: &Trainer| -> Result<()> {
        if let Some(p) = &paths.checkpoint {
            trainer
                .checkpoint()
                .save(p)
                .with_context(|| format!("cannot save checkpoint {}", p.display()))?;
        }
        Ok(())
    };
    let mut recent: Vec<f64> = Vec::new();
    let mut batches = 0;
    while trainer.episodes_done < run.train.total_episodes {
        let m = trainer.run_batch().context("training failed")?;
        batches += 1;
        if let Some(w) = metrics.as_mut() {
            writeln!(w, "{}", serde_json::to_string(&m)?)
                .and_then(|_| w.flush())
                .context("cannot write metrics")?;
        }
        let single = m.success.single_success;
        if !quiet {
            let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.3}"));
            println!(
                "batch {:>5} episodes {:>7} lr {:.2e} single {} skill-diff {}",
                m.batch,
                m.episodes,
                m.lr,
                fmt(single),
                fmt(m.success.skill_difference)
            );
        }
        if batches % CHECKPOINT_EVERY == 0 {
            save(&trainer)?;
        }
        recent.extend(single);
        if let Some(target) = stop_at {
            let tail = &recent[recent.len().saturating_sub(STOP_WINDOW)..];
            if tail.len() == STOP_WINDOW && tail.iter().sum::<f64>() / STOP_WINDOW as f64 >= target
            {
                println!("reached {target} single-agent success");
                break;
            }
        }
    }
    save(&trainer)?;
    println!(
        "{} episodes trained, {} batches in this run",
        trainer.episodes_done, batches
    );
    Ok(())
}

fn parse_gate(g: &str, depth: usize) -> Result<(usize, f64)> {
    let (s, r) = g
        .split_once('=')
        .ok_or_else(|| Usage(format!("gate `{g}` is not STAGE=RATE")))?;
    let stage: usize = s
        .trim()
        .parse()
        .map_err(|_| Usage(format!("bad gate stage `{s}`")))?;
    let rate: f64 = r
        .trim()
        .parse()
        .map_err(|_| Usage(format!("bad gate rate `{r}`")))?;
    if stage < 1 || stage > depth {
        return usage(format!("gate stage {stage} outside 1..={depth}"));
    }
    if !(0.0..=1.0).contains(&rate) {
        return usage(format!("gate rate {rate} outside [0, 1]"));
    }
    Ok((stage, rate))
}

#[allow(clippy::too_many_arguments)]
fn eval(
    cfg: &ConfigArgs,
    policy: Policy,
    checkpoint: Option<&Path>,
    episodes: usize,
    seed: u64,
    traces: Option<&Path>,
    report: Option<&Path>,
    gates: &[String],
) -> Result<()> {
    let run = cfg.resolve(EvalSpec::Training, TrainConfig::desk())?;
    let gates = gates
        .iter()
        .map(|g| parse_gate(g, run.episode.depth))
        .collect::<Result<Vec<_>>>()?;
    if episodes == 0 {
        return usage("--episodes must be at least 1");
    }
    let source = match policy {
        Policy::Scripted => PolicySource::Scripted,
        Policy::Bruteforce => PolicySource::BruteForce,
        Policy::Random => PolicySource::Random,
        Policy::Checkpoint => load_checkpoint(checkpoint)?,
    };
    if let Some(dir) = traces {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let mut rep = match report {
        Some(p) => Some(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => None,
    };
    let result = run_evaluation(&source, &run.episode, episodes, seed, |i, trace| {
        if let Some(dir) = traces {
            save_trace(trace, &dir.join(format!("episode-{i:06}.jsonl")))
                .map_err(|e| std::io::Error::other(format!("{e:#}")))?;
        }
        if let Some(w) = rep.as_mut() {
            let r = trace_record(trace)?;
            let line = json!({"type": "episode", "index": i, "record": r});
            writeln!(w, "{}", serde_json::to_string(&line)?)?;
        }
        Ok(())
    })?;
    if let Some(mut w) = rep {
        let line = json!({"type": "summary", "report": result});
        writeln!(w, "{}", serde_json::to_string(&line)?)?;
        w.flush()?;
    }
    println!(
        "policy {} on {} spec, seeds {}..{}",
        result.policy,
        cfg.spec(EvalSpec::Training)?.name(),
        seed,
        seed.wrapping_add(episodes as u64)
    );
    print!("{}", summary_text(&result.stats));
    let failed: Vec<String> = gates
        .iter()
        .filter(|(s, r)| result.stats.stage_success[s - 1] < *r)
        .map(|(s, r)| {
            format!(
                "stage {s} success {:.4} below {r}",
                result.stats.stage_success[s - 1]
            )
        })
        .collect();
    if !failed.is_empty() {
        return Err(GateFailure(failed.join("; ")).into());
    }
    if !gates.is_empty() {
        println!("all gates passed");
    }
    Ok(())
}

fn summary_text(s: &StatsReport) -> String {
    let mut out = format!("episodes {} depth {}\n", s.episodes, s.depth);
    out.push_str("stage  success  95% interval\n");
    for (k, (r, ci)) in s.stage_success.iter().zip(&s.stage_ci).enumerate() {
        out.push_str(&format!(
            "{:>5}  {:.4}   [{:.4}, {:.4}]\n",
            k + 1,
            r,
            ci[0],
            ci[1]
        ));
    }
    match s.skill_difference {
        Some(d) => {
            let f = |x: Option<f64>| x.map_or("-".into(), |v| format!("{v:.4}"));
            out.push_str(&format!(
                "single-agent stage {}: agent 0 {} agent 1 {} difference {d:.4}\n",
                s.skill_stage,
                f(s.agent_single_success[0]),
                f(s.agent_single_success[1]),
            ));
        }
        None => out.push_str("no single-agent episodes\n"),
    }
    out.push_str(&format!("mean steps {:.1}\n", s.mean_steps));
    out
}

fn table_text(s: &StatsReport) -> String {
    let mut out = String::from("stage\tsuccess\tci_low\tci_high\n");
    for (k, (r, ci)) in s.stage_success.iter().zip(&s.stage_ci).enumerate() {
        out.push_str(&format!("{}\t{r}\t{}\t{}\n", k + 1, ci[0], ci[1]));
    }
    out.push_str("\nagent\tsingle_success\n");
    for (a, r) in s.agent_single_success.iter().enumerate() {
        let v = r.map_or("NA".to_string(), |v| v.to_string());
        out.push_str(&format!("{a}\t{v}\n"));
    }
    out.push_str("\nstage\tbin_start\tbin_end\tcount\n");
    for h in &s.completion_steps {
        for (b, c) in h.counts.iter().enumerate() {
            let lo = b as u64 * h.bin_width;
            out.push_str(&format!("{}\t{lo}\t{}\t{c}\n", h.stage, lo + h.bin_width));
        }
    }
    out
}

/// Expands directories into their `.jsonl` files, sorted by name.
fn trace_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("cannot read {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            found.sort();
            out.extend(found);
        } else if p.exists() {
            out.push(p.clone());
        } else {
            return usage(format!("{} does not exist", p.display()));
        }
    }
    if out.is_empty() {
        return usage("no trace files found");
    }
    Ok(out)
}

fn load_trace(path: &Path) -> Result<EpisodeTrace> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    read_trace(BufReader::new(f)).with_context(|| format!("cannot parse {}", path.display()))
}

fn replay(paths: &[PathBuf]) -> Result<()> {
    let files = trace_files(paths)?;
    let mut diverged = 0;
    for f in &files {
        let trace = load_trace(f)?;
        let rep = replay_trace(&trace)?;
        match &rep.divergence {
            None => println!("{}: ok, {} steps", f.display(), rep.steps),
            Some(d) => {
                diverged += 1;
                println!("{}: diverged at step {} ({})", f.display(), d.step, d.field);
            }
        }
    }
    if diverged > 0 {
        return Err(GateFailure(format!("{diverged} of {} traces diverged", files.len())).into());
    }
    Ok(())
}

fn stats(paths: &[PathBuf], table: bool, json_out: Option<&Path>) -> Result<()> {
    let files = trace_files(paths)?;
    let traces = files
        .iter()
        .map(|f| load_trace(f))
        .collect::<Result<Vec<_>>>()?;
    let s = compute_stats(&traces)?;
    if table {
        print!("{}", table_text(&s));
    } else {
        print!("{}", summary_text(&s));
    }
    if let Some(p) = json_out {
        std::fs::write(p, serde_json::to_string(&s)? + "\n")
            .with_context(|| format!("cannot write {}", p.display()))?;
    }
    Ok(())
}
