//! MNIST end to end: IDX parsing, PCA to 50 dimensions, unit-norm rows,
//! one-vs-all training on 10 nodes with and without privacy.
//!
//! `cargo run --release --example mnist_pipeline [-- DATA_DIR]`
//!
//! `DATA_DIR/mnist` must hold the four uncompressed IDX files
//! (`dpsgd datasets fetch` lists URLs and digests).

use std::path::PathBuf;
use std::time::Instant;

use dpsgd::harness::config::default_data_dir;
use dpsgd::harness::datasets::fetch_report;
use dpsgd::harness::{prepare, run_experiment_with_data, Algorithm, ExperimentConfig};
use dpsgd::Error;

fn main() -> dpsgd::Result<()> {
    let data_dir = std::env::args().nth(1).map_or_else(default_data_dir, PathBuf::from);
    let cfg = ExperimentConfig {
        data_dir: data_dir.clone(),
        algorithms: vec![Algorithm::Noiseless, Algorithm::Collaborative, Algorithm::Adaptive],
        epsilons: vec![0.5],
        seeds: vec![1],
        ..ExperimentConfig::default()
    };
    let start = Instant::now();
    let data = match prepare(&cfg) {
        Ok(d) => d,
        Err(e @ Error::DatasetMissing { .. }) => {
            eprintln!("{e}\n");
            eprint!("{}", fetch_report(&data_dir)?);
            return Ok(());
        }
        Err(e) => return Err(e),
    };
    println!(
        "prepared {} train / {} test rows of dimension {} in {:.1}s; PCA keeps {:.1}% of the variance",
        data.train.len(),
        data.test.len(),
        data.train.dim(),
        start.elapsed().as_secs_f64(),
        100.0 * data.explained_variance.unwrap_or(1.0)
    );
    let out = run_experiment_with_data(&cfg, &data)?;
    println!("{:<14} {:>8} {:>9} {:>9} {:>8}", "algorithm", "epsilon", "accuracy", "averaged", "global");
    for r in out.rows() {
        println!(
            "{:<14} {:>8} {:>9.4} {:>9.4} {:>8.3}",
            r.algorithm.name(),
            r.epsilon.map_or("-".to_string(), |e| e.to_string()),
            r.accuracy,
            r.accuracy_avg,
            r.global_fraction
        );
    }
    Ok(())
}
