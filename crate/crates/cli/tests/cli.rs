use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use blockecho_cli::manifest::file_sha256;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_blockecho"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn synth(dir: &Path, rows: usize, cols: usize) -> PathBuf {
    let out = dir.join("synth");
    ok(&[
        "synth",
        "--rows",
        &rows.to_string(),
        "--cols",
        &cols.to_string(),
        "--rank",
        "2",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    out.join("data.csv")
}

#[test]
fn mask_reports_rate_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 10, 10);
    let mut sums = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("m{k}"));
        let o = out.to_str().unwrap();
        ok(&["mask", "--input", data.to_str().unwrap(), "--pattern", "scattered", "--rate", "0.6", "--seed", "4", "--out-dir", o]);
        let side = json(&out.join("mask.json"));
        assert_eq!(side["achieved_rate"], 0.6);
        assert_eq!(side["zeros"], 60);
        assert_eq!(side["manifest"], "manifest.json");
        sums.push(file_sha256(&out.join("mask.csv")).unwrap());
        let man = json(&out.join("manifest.json"));
        assert_eq!(man["command"], "mask");
        assert!(man["inputs"].as_object().unwrap().len() == 1);
    }
    assert_eq!(sums[0], sums[1]);
}

#[test]
fn infeasible_block_is_a_spec_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("small.csv");
    std::fs::write(&data, "1,2,3,4,5\n1,2,3,4,5\n1,2,3,4,5\n").unwrap();
    let out = run(&[
        "mask", "--input", data.to_str().unwrap(), "--pattern", "uniblock", "--rate", "0.5",
        "--out-dir", dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("block"));
}

#[test]
fn mean_imputation_hand_example() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("x.csv");
    std::fs::write(&data, "1,\n,3\n").unwrap();
    let out = dir.path().join("o");
    ok(&["impute", "--input", data.to_str().unwrap(), "--method", "mean", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(std::fs::read_to_string(out.join("imputed.csv")).unwrap(), "1,2\n2,3\n");
    assert!(!out.join("metrics.json").exists());
}

#[test]
fn impute_with_mask_scores_and_merges_config() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 30, 8);
    let masks = dir.path().join("mask");
    ok(&["mask", "--input", data.to_str().unwrap(), "--rate", "0.3", "--out-dir", masks.to_str().unwrap()]);
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"iters": 7, "alpha": 0.25, "g_warm_steps": 5}"#).unwrap();
    let out = dir.path().join("o");
    ok(&[
        "impute", "--input", data.to_str().unwrap(), "--mask", masks.join("mask.csv").to_str().unwrap(),
        "--config", cfg.to_str().unwrap(), "--alpha", "0.75", "--out-dir", out.to_str().unwrap(),
    ]);
    let man = json(&out.join("manifest.json"));
    assert_eq!(man["config"]["config"]["iters"], 7);
    assert_eq!(man["config"]["config"]["alpha"], 0.75);
    let metrics = json(&out.join("metrics.json"));
    assert!(metrics["rmse_standard"].as_f64().unwrap() >= 0.0);
    let losses = std::fs::read_to_string(out.join("losses.csv")).unwrap();
    assert_eq!(losses.lines().count(), 8);
    let run = json(&out.join("run.json"));
    assert_eq!(run["loss_evaluations"]["mf_term"], 7);

    // observed cells survive bit-exactly
    let orig = std::fs::read_to_string(&data).unwrap();
    let imputed = std::fs::read_to_string(out.join("imputed.csv")).unwrap();
    let mask = std::fs::read_to_string(masks.join("mask.csv")).unwrap();
    for ((a, b), m) in orig.lines().zip(imputed.lines()).zip(mask.lines()) {
        for ((x, y), k) in a.split(',').zip(b.split(',')).zip(m.split(',')) {
            if k == "1" {
                assert_eq!(x.parse::<f64>().unwrap().to_bits(), y.parse::<f64>().unwrap().to_bits());
            }
        }
    }
}

#[test]
fn caller_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 12, 6);
    let o = dir.path().join("o");
    let out = run(&["impute", "--input", data.to_str().unwrap(), "--method", "svd", "--out-dir", o.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"alpah": 0.5}"#).unwrap();
    let out = run(&[
        "impute", "--input", data.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--out-dir",
        o.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpah"));

    let out = run(&[
        "impute", "--input", data.to_str().unwrap(), "--alpha", "1.5", "--out-dir", o.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_is_factorial_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 24, 8);
    let mut sums = Vec::new();
    for (k, jobs) in ["1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("s{k}"));
        ok(&[
            "sweep", "--input", data.to_str().unwrap(), "--rates", "0.2:0.4:0.1", "--patterns", "scattered,uniblock",
            "--methods", "mean,mf,blockecho", "--seeds", "2", "--iters", "5", "--g-warm-steps", "5", "--jobs", jobs,
            "--plot", "--out-dir", out.to_str().unwrap(),
        ]);
        let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + 3 * 2 * 3 * 2);
        assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")));
        assert!(out.join("sweep.svg").exists());
        sums.push(file_sha256(&out.join("sweep.csv")).unwrap());
    }
    assert_eq!(sums[0], sums[1]);
}

#[test]
fn ablate_dedups_and_surfaces_counters() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 24, 8);
    let out = dir.path().join("a");
    let o = ok(&[
        "ablate", "--input", data.to_str().unwrap(), "--variants", "full,adv_only,full", "--baselines", "mf",
        "--seeds", "2", "--iters", "6", "--g-warm-steps", "3", "--out-dir", out.to_str().unwrap(),
    ]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("`full` listed more than once"));
    let report = json(&out.join("ablation.json"));
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    for r in rows {
        match r["variant"].as_str().unwrap() {
            "adv_only" => assert_eq!(r["kl_evaluations"], 0),
            "full" => assert_eq!(r["kl_evaluations"], 6),
            "mf" => assert!(r["kl_evaluations"].is_null()),
            other => panic!("unexpected row {other}"),
        }
    }
}

#[test]
fn forecast_reference_row() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 60, 6);
    let out = dir.path().join("f");
    let same = format!("copy={}", data.display());
    ok(&["forecast", "--input", data.to_str().unwrap(), "--imputed", &same, "--out-dir", out.to_str().unwrap()]);
    let report = json(&out.join("forecast.json"));
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows[0]["variant"], "original");
    assert_eq!(rows[0]["wmape"], rows[1]["wmape"]);
    assert_eq!(report["reference"], rows[0]["wmape"]);
}
