//! The `dpsgd` binary end to end on synthetic data.

use std::path::Path;
use std::process::{Command, Output};

fn dpsgd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpsgd"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

const SMOKE: &str = "\
[data]
dataset = synthetic
pca_dims = none
[synthetic]
train_samples = 1200
[training]
algorithms = noiseless, collaborative, adaptive, baseline
nodes = 4
batch_size = 10
[privacy]
epsilon = 0.5, 1.0
[run]
seeds = 1..2
";

fn write_config(dir: &Path) -> String {
    let p = dir.join("smoke.ini");
    std::fs::write(&p, SMOKE).unwrap();
    p.to_string_lossy().into_owned()
}

/// Data rows of `results.csv` without the wall-time column.
fn results_without_time(dir: &Path) -> Vec<String> {
    std::fs::read_to_string(dir.join("results.csv"))
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect()
}

#[test]
fn run_is_reproducible_and_audits_clean() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let o = dpsgd(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", threads]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let rows = results_without_time(&a);
    assert_eq!(rows, results_without_time(&b));
    // Header + noiseless (2 seeds) + 3 private algorithms x 2 epsilons x 2 seeds.
    assert_eq!(rows.len(), 1 + 2 + 12);
    assert!(rows[0].starts_with("dataset,algorithm,convexity"));
    assert!(rows.iter().any(|r| r.contains(",0.999,")), "epsilon 1.0 is clamped to 0.999");
    for f in ["ledger.json", "bounds.csv"] {
        assert!(a.join(f).is_file(), "{f} missing");
    }

    let o = dpsgd(&["privacy-audit", "--out", a.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("clean"));
}

#[test]
fn audit_fails_on_tampered_ledger() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let out = tmp.path().join("out");
    assert!(dpsgd(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--seeds", "1"]).status.success());
    let path = out.join("ledger.json");
    let mut doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let run = doc["runs"]
        .as_array_mut()
        .unwrap()
        .iter_mut()
        .find(|r| r["algorithm"] == "collaborative")
        .unwrap();
    let owned = run["owned_samples"].as_u64().unwrap();
    run["count_histogram"] = serde_json::json!({"1": owned - 1, "2": 1});
    std::fs::write(&path, serde_json::to_string(&doc).unwrap()).unwrap();
    let o = dpsgd(&["privacy-audit", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn sweep_writes_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let out = tmp.path().join("sweep");
    let o = dpsgd(&[
        "sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--axis", "batch", "--values", "5,20", "--seeds", "1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(out.join("sweep_summary.csv")).unwrap();
    assert!(summary.lines().filter(|l| !l.starts_with('#')).count() > 2);
    let o = dpsgd(&["sweep", "--config", &cfg, "--axis", "batch", "--values", "2.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_errors_name_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("bad.ini");
    std::fs::write(&p, "[training]\nnodes = 4\nbatch_sise = 10\n").unwrap();
    let o = dpsgd(&["run", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn datasets_fetch_lists_digests_without_downloading() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dpsgd(&["datasets", "fetch", "--data-dir", tmp.path().to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("train-images-idx3-ubyte  [missing]"));
    assert!(text.contains("covtype.data"));
    assert!(text.contains("sha256: 65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5"));
    assert!(std::fs::read_dir(tmp.path()).unwrap().next().is_none());
}
