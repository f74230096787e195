// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use reconflow_core::engine::ScheduleLog;

fn reconflow(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reconflow"))
        .args(args)
        .env("RECONFLOW_OUT_DIR", out_dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn plan_prints_components() {
    let dir = tempfile::tempdir().unwrap();
    let o = reconflow(&["plan", "--workflow", "w3", "--ops", "J5,J6,J7,J9"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("component 1: {J5,J6,J7,J8,J9,U1} heads {J5,J6} longest path 4"), "{}", stdout(&o));

    let o = reconflow(&["plan", "--workflow", "w5", "--ops", "E1", "--pruning", "--json"], dir.path());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["components"][0]["vertices"], serde_json::json!(["E1"]));
}

#[test]
fn plan_reads_request_files() {
    let dir = tempfile::tempdir().unwrap();
    let req = dir.path().join("req.json");
    fs::write(
        &req,
        r#"{"scheduler":"fries","options":{"extended":true},"updates":[{"operator":"FD1","new_function":"inference:20"}]}"#,
    )
    .unwrap();
    let o = reconflow(&["plan", "--workflow", "w4", "--request", req.to_str().unwrap()], dir.path());
    assert!(stdout(&o).contains("component 1: {FD1,U2} heads {U2} longest path 1"), "{}", stdout(&o));
}

#[test]
fn check_exit_codes_follow_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    // t runs through FC, FM, MC; the update touches FM and MC.
    let mut s1 = ScheduleLog::new();
    s1.phi("FC", 1).mu("FM", 0).phi("FM", 1).mu("MC", 0).phi("MC", 1);
    let mut s3 = ScheduleLog::new();
    s3.phi("FC", 1).phi("FM", 1).mu("FM", 0).mu("MC", 0).phi("MC", 1);
    let p1 = dir.path().join("s1.jsonl");
    let p3 = dir.path().join("s3.jsonl");
    fs::write(&p1, s1.to_jsonl()).unwrap();
    fs::write(&p3, s3.to_jsonl()).unwrap();

    let o = reconflow(&["check", p1.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("serializable"));

    let o = reconflow(&["check", p3.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("Phi(FM) before Mu(FM) and Mu(MC) before Phi(MC)"), "{}", stdout(&o));

    fs::write(&p3, "not a log").unwrap();
    assert_eq!(reconflow(&["check", p3.to_str().unwrap()], dir.path()).status.code(), Some(1));
}

#[test]
fn fuzz_finds_and_minimizes_naive_failures() {
    let dir = tempfile::tempdir().unwrap();
    let o = reconflow(&["fuzz", "--scheduler", "naive", "--graph", "fig2", "--ops", "FM,MC", "--runs", "200"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("minimized: seed"), "{out}");
    let o = reconflow(&["fuzz", "--scheduler", "naive", "--graph", "fig2", "--runs", "200", "--expect-safe"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = reconflow(&["fuzz", "--scheduler", "epoch", "--runs", "50", "--expect-safe"], dir.path());
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(reconflow(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(reconflow(&["plan", "--workflow", "w9", "--ops", "A"], dir.path()).status.code(), Some(1));
    assert_eq!(reconflow(&["plan", "--workflow", "w1", "--ops", "NOPE"], dir.path()).status.code(), Some(1));
    assert_eq!(reconflow(&["--help"], dir.path()).status.code(), Some(0));
}

const SPEC: &str = r#"{
    "workflow": "fig2",
    "scheduler": "fries",
    "reconfigurations": [{"at_us": 20000, "touch": ["FC", "MC"]}],
    "rate": [[0, 4000.0]],
    "max_tuples": 300,
    "window_ms": 10,
    "reps": 2
}"#;

#[test]
fn run_is_reproducible_and_honors_flags() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("exp.json");
    fs::write(&spec, SPEC).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = reconflow(&["run", spec.to_str().unwrap(), "--seed", "7", "--reps", "3"], d);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let csv_a = fs::read_to_string(a.join("exp.csv")).unwrap();
    assert_eq!(csv_a, fs::read_to_string(b.join("exp.csv")).unwrap());
    assert!(csv_a.starts_with("event,vtime_or_wallclock_ms,value\n"));
    assert!(csv_a.contains("rep2.reconfig_delay_ms"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("exp.json")).unwrap()).unwrap();
    assert_eq!(report["spec"]["seed"], 7);
    assert_eq!(report["reps"].as_array().unwrap().len(), 3);
}

#[test]
fn concurrent_mode_runs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("exp.json");
    fs::write(&spec, SPEC).unwrap();
    let o = reconflow(&["run", spec.to_str().unwrap(), "--mode", "concurrent", "--reps", "1"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("reconfiguration 1: delay"));
}

#[test]
fn invalid_spec_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.json");
    fs::write(&spec, r#"{"workflow": "w1", "reps": 0, "max_tuples": 10}"#).unwrap();
    assert_eq!(reconflow(&["run", spec.to_str().unwrap()], dir.path()).status.code(), Some(1));
}

#[test]
fn bench_writes_channel_counts() {
    let dir = tempfile::tempdir().unwrap();
    let o = reconflow(&["bench", "--sweep", "channels"], dir.path());
    assert!(o.status.success());
    let csv = fs::read_to_string(dir.path().join("w2_channels.csv")).unwrap();
    assert!(csv.contains("4,68,48"), "{csv}");
    assert!(csv.contains("40,6440,4800"), "{csv}");
}

#[test]
fn engine_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("boom.json");
    // A one-to-one operator that emits two tuples per input.
    fs::write(&spec, r#"{"workflow": "fig2", "functions": {"FM": "unnest:2"}, "max_tuples": 10}"#).unwrap();
    let o = reconflow(&["run", spec.to_str().unwrap(), "--seed", "5"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed 5"));
}

#[test]
fn shipped_specs_validate() {
    for s in [include_str!("../specs/w1_fries.json"), include_str!("../specs/w3_epoch.json")] {
        reconflow_cli::experiment::ExperimentSpec::from_json(s).unwrap().validate().unwrap();
    }
}
