//! Runs a small experiment with full per-sample ledgers, audits the output
//! directory, then corrupts one ledger to show the audit catching reuse.
//!
//! `cargo run --release --example privacy_audit`

use dpsgd::harness::{privacy_audit, run_experiment, Algorithm, DatasetKind, ExperimentConfig};

fn main() -> dpsgd::Result<()> {
    let dir = std::env::temp_dir().join("privacy_audit_example");
    let _ = std::fs::remove_dir_all(&dir);
    let mut cfg = ExperimentConfig {
        dataset: DatasetKind::Synthetic,
        pca_dims: None,
        algorithms: vec![Algorithm::Collaborative, Algorithm::Adaptive, Algorithm::Baseline],
        nodes: 4,
        seeds: vec![1],
        out_dir: dir.clone(),
        write_ledgers: true,
        ..ExperimentConfig::default()
    };
    cfg.synthetic.samples = 1200;
    run_experiment(&cfg)?;

    let lines = privacy_audit(&dir)?;
    println!("{} entries audited, {} violations", lines.len(), lines.iter().filter(|l| !l.ok).count());

    // Mark one sample of a single-pass run as used twice.
    let ledgers = dir.join("ledgers");
    let victim = std::fs::read_dir(&ledgers)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .find(|p| p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("collaborative")))
        .expect("collaborative ledger written");
    let mut doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&victim)?)?;
    let key = doc
        .as_object()
        .and_then(|m| m.keys().find(|k| k.parse::<usize>().is_ok()).cloned())
        .expect("ledger has sample entries");
    doc[&key] = serde_json::json!(2);
    std::fs::write(&victim, serde_json::to_string(&doc)?)?;

    for l in privacy_audit(&dir)?.iter().filter(|l| !l.ok) {
        println!("detected: {}: {}", l.run, l.message);
    }
    Ok(())
}
