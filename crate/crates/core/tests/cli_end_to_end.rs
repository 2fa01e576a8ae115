//! The `saavi` command line driven in-process through `run_cli`, plus the
//! built binary for exit codes and the worker-count variable.

use std::fs;
use std::path::Path;
use std::process::Command;

use saavi::cli::{check_gradients_with, run_cli};
use saavi::families::{FamilyKind, VariationalParams};
use saavi::models::{random_gaussian_target, LatentModel};
use saavi::objective::{training_gradient, NoiseBlock};

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["saavi"];
    argv.extend_from_slice(args);
    let code = run_cli(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn write_config(dir: &Path, json: &str) -> String {
    let p = dir.join("config.json");
    fs::write(&p, json).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn run_writes_reproducible_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let outputs: Vec<(String, String, String)> = (0..2)
        .map(|k| {
            let out = tmp.path().join(format!("out{k}"));
            let (code, _, err) = cli(&[
                "run",
                "--model",
                "gaussian-3d",
                "--family",
                "dense",
                "--seed",
                "4",
                "--repetitions",
                "3",
                "--out",
                out.to_str().unwrap(),
            ]);
            assert_eq!(code, 0, "{err}");
            let read = |f: &str| fs::read_to_string(out.join(f)).unwrap();
            assert!(out.join("timing.jsonl").exists());
            (read("trace.jsonl"), read("summary.csv"), read("params.json"))
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);

    let mut rdr = csv::Reader::from_reader(outputs[0].1.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(&headers[0], "repetition");
    assert!(headers.iter().any(|h| h == "final_elbo"));
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    let seeds: Vec<&str> = rows.iter().map(|r| &r[1]).collect();
    assert_eq!(seeds, vec!["4", "5", "6"]);

    for line in outputs[0].0.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["method"], "saa");
    }
    let params: serde_json::Value = serde_json::from_str(&outputs[0].2).unwrap();
    assert_eq!(params["runs"].as_array().unwrap().len(), 3);
    assert_eq!(params["runs"][0]["theta"].as_array().unwrap().len(), FamilyKind::Dense.param_len(3));
}

#[test]
fn compare_emits_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("cmp");
    let config = write_config(
        tmp.path(),
        r#"{
            "model": "gaussian-2d",
            "repetitions": 2,
            "adam_grid": [0.1, 0.01],
            "adam": {"iterations": 300, "eval_every": 50, "eval_m": 500},
            "saa": {"eval_m": 1000}
        }"#,
    );
    let (code, stdout, err) = cli(&["compare", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("saa"));
    for f in ["comparison.csv", "summary.csv", "comparison.md", "comparison.json", "trace.jsonl"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let mut rdr = csv::Reader::from_path(out.join("comparison.csv")).unwrap();
    let methods: Vec<String> = rdr.records().map(|r| r.unwrap()[0].to_string()).collect();
    assert_eq!(methods, vec!["adam(0.1)", "adam(0.01)", "saa"]);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.lines().next().unwrap().contains("difference"));
    assert!(summary.lines().next().unwrap().contains("time_ratio"));
}

#[test]
fn adam_command_writes_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("adam");
    let config = write_config(tmp.path(), r#"{"adam": {"iterations": 200, "eval_every": 100, "eval_m": 200}}"#);
    let (code, _, err) = cli(&["adam", "--config", &config, "--repetitions", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let rows = csv::Reader::from_path(out.join("summary.csv")).unwrap().records().count();
    assert_eq!(rows, 2);
    assert_eq!(fs::read_to_string(out.join("trace.jsonl")).unwrap().lines().count(), 4);
}

#[test]
fn diagnose_unbounded_prints_csv_and_verdict() {
    let (code, stdout, stderr) = cli(&["diagnose-unbounded", "--dim", "4", "--n", "2"]);
    assert_eq!(code, 0);
    assert!(stderr.starts_with("PASS"));
    let mut rdr = csv::Reader::from_reader(stdout.as_bytes());
    let rows: Vec<Vec<f64>> = rdr
        .records()
        .map(|r| r.unwrap().iter().map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 5);
    for r in &rows {
        assert!((r[2] - rows[0][2]).abs() < 1e-6);
        assert!((r[1] - r[0].ln() - r[2]).abs() < 1e-9);
    }

    let (code, _, stderr) = cli(&["diagnose-unbounded", "--dim", "2", "--n", "2"]);
    assert_eq!(code, 2);
    assert!(stderr.contains("requires n < d"), "{stderr}");
}

#[test]
fn check_gradients_passes() {
    for family in ["diagonal", "dense"] {
        let (code, stdout, _) = cli(&["check-gradients", "--model", "funnel-3d", "--family", family, "--points", "5"]);
        assert_eq!(code, 0, "{stdout}");
        for line in stdout.lines().skip(2).take_while(|l| !l.starts_with("PASS")) {
            let err: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
            assert!(err <= 1e-6, "{line}");
        }
    }
}

#[test]
fn corrupted_gradient_is_caught() {
    let model = random_gaussian_target(3, 0).unwrap();
    let broken = |m: &dyn LatentModel, p: &VariationalParams, n: &NoiseBlock| {
        let mut g = training_gradient(m, p, n)?;
        g[4] *= 1.001;
        Ok(g)
    };
    let report = check_gradients_with(&model, FamilyKind::Dense, 3, 0, &broken).unwrap();
    assert!(!report.pass());
    assert!(report.blocks[1].1 > 1e-5 && report.blocks[0].1 < 1e-6);
}

#[test]
fn configuration_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, _, err) = cli(&["run", "--family", "banana"]);
    assert_eq!(code, 2);
    assert!(err.contains("diagonal") && err.contains("dense"), "{err}");

    let config = write_config(tmp.path(), r#"{"sede": 1}"#);
    let (code, _, err) = cli(&["run", "--config", &config]);
    assert_eq!(code, 2);
    assert!(err.contains("sede"), "{err}");

    let (code, _, err) = cli(&["run", "--model", "logistic"]);
    assert_eq!(code, 2, "{err}");

    let config = write_config(tmp.path(), r#"{"model": "logistic", "dataset": {"path": "/nonexistent/x.svm", "format": "libsvm"}}"#);
    let (code, _, err) = cli(&["run", "--config", &config]);
    assert_eq!(code, 2);
    assert!(err.contains("does not exist"), "{err}");

    let (code, _, _) = cli(&["frobnicate"]);
    assert_eq!(code, 2);
    let (code, stdout, _) = cli(&["--help"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("check-gradients"));
}

#[test]
fn binary_honours_worker_variable() {
    let bin = env!("CARGO_BIN_EXE_saavi");
    let status = Command::new(bin)
        .args(["diagnose-unbounded", "--dim", "3", "--n", "1"])
        .env("SAAVI_WORKERS", "2")
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    let status = Command::new(bin)
        .args(["diagnose-unbounded"])
        .env("SAAVI_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&status.stderr).contains("SAAVI_WORKERS"));
}
