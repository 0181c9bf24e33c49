//! Adaptive training: each node keeps a local model and its controller
//! decides per mini-batch between a noise-free local step and a noisy
//! global commit. Writes the action log and controller trace as CSV.
//!
//! `cargo run --release --example adaptive_training [-- OUT_DIR]`

use std::path::PathBuf;

use dpsgd::adaptive::{run_adaptive, write_actions_csv, write_controller_trace_csv, AdaptiveConfig};
use dpsgd::data::{partition, BinaryTask};
use dpsgd::deep_q::Action;
use dpsgd::harness::check::synthetic_binary_task;
use dpsgd::linalg::{DenseVector, RngStream};
use dpsgd::loss::LossParams;
use dpsgd::privacy::{delta_for, PrivacySpec};

fn sign_accuracy(w: &DenseVector, task: &BinaryTask) -> f64 {
    let correct = (0..task.len())
        .filter(|&i| {
            let s = task.sample(i);
            let score: f64 = w.as_slice().iter().zip(s.x).map(|(a, b)| a * b).sum();
            (score >= 0.0) == (s.y > 0.0)
        })
        .count();
    correct as f64 / task.len() as f64
}

fn main() -> dpsgd::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("adaptive_example"), PathBuf::from);
    std::fs::create_dir_all(&out)?;

    let task = synthetic_binary_task(10, 8000, 2)?;
    let (nodes, per_node, b) = (8, 1000, 20);
    let part = partition(task.len(), nodes, per_node, &mut RngStream::derive(1, "partition", 0))?;
    let params = LossParams::new(1e-3, 50.0)?;
    let mut cfg = AdaptiveConfig::new(b, 0.2, params, 5);
    cfg.privacy = Some(PrivacySpec::new(0.5, delta_for(nodes * per_node))?);
    cfg.controller.anneal_steps = (per_node / (2 * b)) as u64;

    let run = run_adaptive(&task, &part, &cfg)?;
    let globals = run.actions.iter().filter(|a| a.action == Action::Global).count();
    println!("ticks {}, global commits {globals} of {} decisions", run.ticks, run.actions.len());

    let quarter = run.global_fraction.len() / 4;
    for (q, chunk) in run.global_fraction.chunks(quarter.max(1)).take(4).enumerate() {
        let mean = chunk.iter().sum::<f64>() / chunk.len() as f64;
        println!("quarter {}: global fraction {mean:.3}", q + 1);
    }
    println!("global model accuracy   {:.4}", sign_accuracy(&run.global_model, &task));
    println!("averaged global model   {:.4}", sign_accuracy(&run.average_global, &task));
    for (m, w) in run.local_models.iter().enumerate().take(3) {
        println!("node {m} local accuracy  {:.4}", sign_accuracy(w, &task));
    }
    run.ledger.audit()?;

    write_actions_csv(&run.actions, &out.join("actions.csv"))?;
    write_controller_trace_csv(&run.controller_trace, &out.join("controller_trace.csv"))?;
    println!("wrote {}", out.display());
    Ok(())
}
