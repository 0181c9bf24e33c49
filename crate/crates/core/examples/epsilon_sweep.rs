//! Accuracy against the privacy level on synthetic data: median and IQR
//! over seeds for collaborative, adaptive and multi-pass baseline training.
//!
//! `cargo run --release --example epsilon_sweep [-- OUT_DIR]`

use std::path::PathBuf;

use dpsgd::harness::datasets::prepare;
use dpsgd::harness::sweep::{summarize, sweep, write_sweep, SweepAxis};
use dpsgd::harness::{Algorithm, DatasetKind, ExperimentConfig};

fn main() -> dpsgd::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("epsilon_sweep"), PathBuf::from);
    let mut cfg = ExperimentConfig {
        dataset: DatasetKind::Synthetic,
        pca_dims: None,
        algorithms: vec![Algorithm::Collaborative, Algorithm::Adaptive, Algorithm::Baseline],
        nodes: 5,
        batch_size: 10,
        seeds: (1..=5).collect(),
        out_dir: out.clone(),
        ..ExperimentConfig::default()
    };
    cfg.synthetic.samples = 5000;
    let data = prepare(&cfg)?;
    let values = [0.05, 0.1, 0.3, 0.5, 0.999];
    let rows = sweep(&cfg, &data, SweepAxis::Epsilon, &values)?;
    write_sweep(&cfg, SweepAxis::Epsilon, &rows, &out)?;
    println!("{:>8} {:<14} {:>8} {:>8}", "epsilon", "algorithm", "median", "iqr");
    for s in summarize(&rows) {
        println!("{:>8} {:<14} {:>8.4} {:>8.4}", s.value, s.algorithm.name(), s.median, s.iqr());
    }
    println!("wrote {}", out.display());
    Ok(())
}
