//! End-to-end runs of the `ssadvae` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn ssadvae(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssadvae"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SSADVAE_OUT")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn run_dir(o: &Output) -> PathBuf {
    PathBuf::from(stdout(o).lines().next().expect("run directory on first line"))
}

const QUICK: [&str; 6] = ["--epochs", "12", "--set", "warmup_epochs=5", "--set", "anneal_epochs=4"];

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn train_with_defaults_writes_five_members_and_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ssadvae(&["train", "--synth", "8,300", "--out", "runs"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = tmp.path().join(run_dir(&o));
    for i in 0..5 {
        assert!(dir.join(format!("member_{i}.bin")).is_file(), "member {i}");
    }
    assert!(!dir.join("member_5.bin").exists());
    let manifest = json(&dir.join("manifest.json"));
    assert_eq!(manifest["spec"]["train"]["ensemble"], 5);
    assert_eq!(manifest["spec"]["train"]["epochs"], 150);
    assert_eq!(manifest["spec"]["method"], "mml");
    assert_eq!(json(&dir.join("ensemble.json"))["members"].as_array().unwrap().len(), 5);
}

#[test]
fn bad_dataset_path_fails_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ssadvae(&["train", "--dataset", "missing.csv", "--out", "runs"], tmp.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.csv"));
    assert!(!tmp.path().join("runs").exists() || fs::read_dir(tmp.path().join("runs")).unwrap().next().is_none());
}

#[test]
fn plain_vae_mode_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["train", "--synth", "4,200", "--method", "vae", "--gamma-l", "0", "--ensemble", "1", "--out", "runs"];
    args.extend(QUICK);
    let o = ssadvae(&args, tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = json(&tmp.path().join(run_dir(&o)).join("manifest.json"));
    assert_eq!(manifest["spec"]["method"], "vae");
    assert_eq!(manifest["spec"]["gamma_l"], 0.0);
}

#[test]
fn score_separates_anomalies_and_rejects_bad_input() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["train", "--synth", "4,300", "--method", "dp", "--ensemble", "1", "--out", "runs"];
    args.extend(QUICK);
    let o = ssadvae(&args, tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let model = run_dir(&o);
    let model = model.to_str().unwrap();

    let scored = ssadvae(&["score", "--model", model, "--synth", "4,200", "--out", "s.csv"], tmp.path());
    assert!(scored.status.success(), "{}", String::from_utf8_lossy(&scored.stderr));
    let mut rdr = csv::Reader::from_path(tmp.path().join("s.csv")).unwrap();
    let (mut normal, mut anomaly) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let s: f64 = rec[1].parse().unwrap();
        match &rec[2] {
            "normal" => normal.push(s),
            _ => anomaly.push(s),
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert_eq!(normal.len(), 200);
    assert!(mean(&anomaly) < mean(&normal));

    // the same data twice gives the same scores
    let again = ssadvae(&["score", "--model", model, "--synth", "4,200"], tmp.path());
    assert_eq!(stdout(&again), fs::read_to_string(tmp.path().join("s.csv")).unwrap());

    fs::write(tmp.path().join("empty.csv"), "").unwrap();
    let empty = ssadvae(&["score", "--model", model, "--dataset", "empty.csv"], tmp.path());
    assert!(!empty.status.success());

    let wide = ssadvae(&["score", "--model", model, "--synth", "5,20"], tmp.path());
    assert!(!wide.status.success());
}

#[test]
fn single_seed_benchmark_reports_zero_stdev() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["benchmark", "--synth", "4,200", "--seeds", "3", "--ensemble", "2", "--out", "runs"];
    args.extend(QUICK);
    let o = ssadvae(&args, tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&tmp.path().join(run_dir(&o)).join("report.json"));
    assert_eq!(report["single_seed"], true);
    assert_eq!(report["stdev_auroc"], 0.0);
    assert_eq!(report["status"], "ok");
}

#[test]
fn invalid_settings_exit_with_usage_code() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ssadvae(&["train", "--synth", "4,100", "--epochs", "10", "--out", "runs"], tmp.path());
    assert_eq!(o.status.code(), Some(1), "warm-up longer than training must be rejected");
    let o = ssadvae(&["train", "--synth", "4,100", "--method", "nope"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
}
