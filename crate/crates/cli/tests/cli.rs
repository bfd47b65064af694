use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn cotask(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cotask"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn text(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&cotask(&["--help"])), 0);
    assert_eq!(code(&cotask(&["--version"])), 0);
    assert_eq!(code(&cotask(&["eval", "--help"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&cotask(&[])), 1);
    assert_eq!(code(&cotask(&["eval", "--bogus"])), 1);
    assert_eq!(code(&cotask(&["gen", "--set", "episode.nope=1"])), 1);
    assert_eq!(code(&cotask(&["gen", "--p-multi", "1.5"])), 1);
    assert_eq!(code(&cotask(&["gen", "--spec", "unknown"])), 1);
    assert_eq!(code(&cotask(&["eval", "--policy", "checkpoint"])), 1);
    assert_eq!(code(&cotask(&["eval", "--gate", "9=0.5"])), 1);
}

#[test]
fn missing_checkpoint_is_a_runtime_failure() {
    let o = cotask(&[
        "eval",
        "--policy",
        "checkpoint",
        "--checkpoint",
        "/nonexistent/model.ckpt",
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn gen_is_deterministic_json() {
    let a = cotask(&["gen", "--seed", "7", "--count", "3", "--depth", "4"]);
    let b = cotask(&["gen", "--seed", "7", "--count", "3", "--depth", "4"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let lines: Vec<serde_json::Value> = text(&a)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    for l in &lines {
        for t in l["trees"].as_array().unwrap() {
            assert_eq!(t["depth"], 4);
        }
    }
    let d = cotask(&["gen", "--describe", "--spec", "forced-coop"]);
    assert!(text(&d).contains("stage 1"));
}

#[test]
fn played_trace_replays_and_tampering_is_caught() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("ep.jsonl");
    let o = cotask(&[
        "play",
        "--mode",
        "bruteforce",
        "--seed",
        "4",
        "--step-limit",
        "300",
        "--trace",
        p(&trace),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(code(&cotask(&["replay", p(&trace)])), 0);

    // Flip agent 0's forward command at step 5.
    let body = std::fs::read_to_string(&trace).unwrap();
    let mut lines: Vec<String> = body.lines().map(str::to_string).collect();
    let mut rec: serde_json::Value = serde_json::from_str(&lines[6]).unwrap();
    let f = rec["actions"][1].as_f64().unwrap();
    rec["actions"][1] = serde_json::json!(if f > 0.5 { 0.0 } else { 1.0 });
    lines[6] = rec.to_string();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, lines.join("\n") + "\n").unwrap();
    let o = cotask(&["replay", p(&bad)]);
    assert_eq!(code(&o), 3);
    assert!(text(&o).contains("diverged"));
}

#[test]
fn eval_reports_repeat_and_feed_stats() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let report = dir.path().join(name);
        let traces = dir.path().join(format!("{name}-traces"));
        let o = cotask(&[
            "eval",
            "--policy",
            "scripted",
            "--episodes",
            "6",
            "--seed",
            "11",
            "--step-limit",
            "400",
            "--report",
            p(&report),
            "--traces",
            p(&traces),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        (std::fs::read(&report).unwrap(), traces)
    };
    let (a, traces) = run("a.jsonl");
    let (b, _) = run("b.jsonl");
    assert_eq!(a, b);
    let body = String::from_utf8(a).unwrap();
    let lines: Vec<serde_json::Value> = body
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 7);
    assert_eq!(lines[6]["type"], "summary");
    let summary_rate = &lines[6]["report"]["stats"]["stage_success"];

    let json = dir.path().join("stats.json");
    let o = cotask(&["stats", p(&traces), "--json", p(&json)]);
    assert_eq!(code(&o), 0);
    let stats: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(&stats["stage_success"], summary_rate);
    let o = cotask(&["stats", p(&traces), "--table"]);
    assert!(text(&o).starts_with("stage\tsuccess"));
    assert_eq!(code(&cotask(&["replay", p(&traces)])), 0);
}

#[test]
fn eval_gate_failure_exits_three() {
    let o = cotask(&[
        "eval",
        "--policy",
        "random",
        "--episodes",
        "3",
        "--step-limit",
        "50",
        "--gate",
        "3=0.9",
    ]);
    assert_eq!(code(&o), 3);
}

#[test]
fn stats_needs_traces() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&cotask(&["stats", p(dir.path())])), 1);
}

#[test]
fn train_checkpoint_eval_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("model.ckpt");
    let metrics = dir.path().join("metrics.jsonl");
    let common = [
        "--set",
        "train.hidden=8",
        "--set",
        "train.episodes_per_batch=4",
        "--step-limit",
        "30",
        "--quiet",
    ];
    let mut args = vec![
        "train",
        "--episodes",
        "8",
        "--checkpoint",
        p(&ck),
        "--metrics",
        p(&metrics),
    ];
    args.extend(common);
    let o = cotask(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read_to_string(&metrics).unwrap().lines().count(),
        2
    );

    let o = cotask(&[
        "eval",
        "--spec",
        "smoke",
        "--step-limit",
        "30",
        "--policy",
        "checkpoint",
        "--checkpoint",
        p(&ck),
        "--episodes",
        "3",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let mut args = vec!["train", "--episodes", "12", "--resume", p(&ck)];
    args.extend(common);
    let o = cotask(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(text(&o).contains("12 episodes trained, 1 batches"));

    // A different network width cannot resume.
    let o = cotask(&[
        "train",
        "--episodes",
        "12",
        "--resume",
        p(&ck),
        "--set",
        "train.hidden=9",
        "--set",
        "train.episodes_per_batch=4",
        "--step-limit",
        "30",
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn human_play_reads_keys() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_cotask"))
        .args(["play", "--mode", "human", "--seed", "2"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"w\nwa|d\n\nq\n")
        .unwrap();
    let o = child.wait_with_output().unwrap();
    assert_eq!(code(&o), 0);
    let s = text(&o);
    assert!(s.contains("stopped at t = 3"), "{s}");
    assert!(s.contains("world 0"));
}
