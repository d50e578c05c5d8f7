use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fairlink::experiment::{mean_std, RunReport};
use fairlink::models::Checkpoint;
use fairlink::DyadicModel;

fn fairlink(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairlink"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn synth(dir: &Path, name: &str, seed: &str) {
    ok(&fairlink(
        &["synth", "--nodes", "40", "--p-intra", "0.3", "--p-inter", "0.05", "--seed", seed, "--out", name],
        dir,
    ));
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "a", "7");
    synth(dir.path(), "b", "7");
    synth(dir.path(), "c", "8");
    for f in ["edges.txt", "attrs.csv"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        assert_eq!(a, fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
    assert_ne!(
        fs::read(dir.path().join("a/edges.txt")).unwrap(),
        fs::read(dir.path().join("c/edges.txt")).unwrap()
    );
}

#[test]
fn single_run_writes_one_report() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "g", "1");
    ok(&fairlink(
        &[
            "run", "--edges", "g/edges.txt", "--attrs", "g/attrs.csv", "--model", "dot", "--seeds", "3",
            "--epochs", "5", "--dim", "4", "--out", "out",
        ],
        dir.path(),
    ));
    let runs: Vec<_> = fs::read_dir(dir.path().join("out/runs"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".json"))
        .collect();
    assert_eq!(runs, vec!["dot_seed3.json".to_string()]);
    let mut rows = csv::Reader::from_path(dir.path().join("out/runs.csv")).unwrap();
    assert_eq!(rows.records().count(), 1);
    for f in ["aggregate.csv", "plot.csv", "nodes.csv", "spec.json", "runs/dot_seed3_trace.csv"] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }
    assert!(!dir.path().join("out/failures.json").exists());
}

#[test]
fn aggregate_matches_per_run_reports() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "g", "2");
    ok(&fairlink(
        &[
            "run", "--edges", "g/edges.txt", "--attrs", "g/attrs.csv", "--model", "dot", "--fairness", "none,dp",
            "--gamma", "10", "--seeds", "0..3", "--epochs", "5", "--dim", "4", "--jobs", "2", "--out", "out",
        ],
        dir.path(),
    ));
    let mut agg = csv::Reader::from_path(dir.path().join("out/aggregate.csv")).unwrap();
    let headers = agg.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let mut cells = 0;
    for row in agg.records() {
        let row = row.unwrap();
        let method = &row[col("method")];
        let stem = if method.contains("DP") { "dot_dp_g10" } else { "dot" };
        let reports: Vec<RunReport> = (0..3)
            .map(|s| {
                let text = fs::read_to_string(dir.path().join(format!("out/runs/{stem}_seed{s}.json"))).unwrap();
                serde_json::from_str(&text).unwrap()
            })
            .collect();
        assert!(reports.iter().all(|r| r.method == method));
        for (metric, get) in [
            ("auc", (|r: &RunReport| r.eval.auc) as fn(&RunReport) -> f64),
            ("dp", |r| r.eval.dp),
            ("eo", |r| r.eval.eo),
            ("rdp", |r| r.eval.rdp),
        ] {
            let (m, s) = mean_std(&reports.iter().map(get).collect::<Vec<_>>());
            let mean: f64 = row[col(&format!("{metric}_mean"))].parse().unwrap();
            let std: f64 = row[col(&format!("{metric}_std"))].parse().unwrap();
            assert!((m - mean).abs() <= 1e-12, "{method} {metric} mean");
            assert!((s - std).abs() <= 1e-12, "{method} {metric} std");
        }
        cells += 1;
    }
    assert_eq!(cells, 2);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "g", "0");
    let bad_seeds = fairlink(&["run", "--edges", "g/edges.txt", "--attrs", "g/attrs.csv", "--seeds", "x"], dir.path());
    assert_eq!(bad_seeds.status.code(), Some(2));
    let no_source = fairlink(&["run", "--model", "dot", "--out", "o"], dir.path());
    assert_eq!(no_source.status.code(), Some(2));
    let half_source = fairlink(&["run", "--edges", "g/edges.txt", "--out", "o"], dir.path());
    assert_eq!(half_source.status.code(), Some(2));
    let bad_epochs = fairlink(
        &["train", "--edges", "g/edges.txt", "--attrs", "g/attrs.csv", "--epochs", "0", "--out", "m"],
        dir.path(),
    );
    assert_eq!(bad_epochs.status.code(), Some(2));
    let missing = fairlink(&["train", "--edges", "nope.txt", "--attrs", "nope.csv", "--out", "m"], dir.path());
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "g", "4");
    fs::write(
        dir.path().join("exp.json"),
        r#"{"dataset": "tiny", "cells": [{"model": "dot"}], "seeds": [0, 1], "train": {"epochs": 3, "dim": 2}}"#,
    )
    .unwrap();
    ok(&fairlink(
        &["run", "--config", "exp.json", "--edges", "g/edges.txt", "--attrs", "g/attrs.csv", "--dim", "5", "--out", "out"],
        dir.path(),
    ));
    let text = fs::read_to_string(dir.path().join("out/runs/dot_seed1.json")).unwrap();
    let report: RunReport = serde_json::from_str(&text).unwrap();
    assert_eq!(report.dataset, "tiny");
    assert_eq!((report.config.epochs, report.config.dim), (3, 5));
    assert!(!dir.path().join("out/runs/dot_seed2.json").exists());
}

#[test]
fn train_writes_loadable_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "g", "5");
    ok(&fairlink(
        &[
            "train", "--edges", "g/edges.txt", "--attrs", "g/attrs.csv", "--model", "cne", "--fairness", "eo",
            "--gamma", "10", "--epochs", "4", "--dim", "3", "--seed", "9", "--out", "m",
        ],
        dir.path(),
    ));
    let ckpt = Checkpoint::from_json(&fs::read_to_string(dir.path().join("m/model.json")).unwrap()).unwrap();
    assert_eq!(ckpt.seed, 9);
    assert_eq!(ckpt.model.node_count(), 40);
    assert_eq!(ckpt.config["criterion"], "eo");
    let p = ckpt.model.probability(0, 1);
    assert!(p > 0.0 && p < 1.0);
    let trace = csv::Reader::from_path(dir.path().join("m/trace.csv")).unwrap().into_records().count();
    assert_eq!(trace, 4);
}
