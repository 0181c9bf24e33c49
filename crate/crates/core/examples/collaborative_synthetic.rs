//! Fully collaborative training on a two-class synthetic task: every
//! mini-batch of every node updates one shared model. Compares noise-free
//! training with several privacy levels.
//!
//! `cargo run --release --example collaborative_synthetic`

use dpsgd::collaborative::{run_collaborative, CollaborativeConfig};
use dpsgd::data::{partition, BinaryTask};
use dpsgd::harness::check::synthetic_binary_task;
use dpsgd::linalg::{DenseVector, RngStream};
use dpsgd::loss::{empirical_risk, LossParams};
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
    let task = synthetic_binary_task(10, 8000, 1)?;
    let (nodes, per_node, b) = (8, 1000, 20);
    let params = LossParams::new(1e-3, 50.0)?;
    let delta = delta_for(nodes * per_node);
    let part = partition(task.len(), nodes, per_node, &mut RngStream::derive(1, "partition", 0))?;

    println!("{:>10} {:>8} {:>8} {:>10} {:>10}", "epsilon", "steps", "acc", "acc(avg)", "risk");
    for eps in [None, Some(0.999), Some(0.5), Some(0.1)] {
        let cfg = CollaborativeConfig {
            privacy: eps.map(|e| PrivacySpec::new(e, delta)).transpose()?,
            ..CollaborativeConfig::new(b, 0.5, params, 42)
        };
        let run = run_collaborative(&task, &part, &cfg)?;
        run.ledger.audit()?;
        println!(
            "{:>10} {:>8} {:>8.4} {:>10.4} {:>10.4}",
            eps.map_or("none".to_string(), |e| e.to_string()),
            run.steps.len(),
            sign_accuracy(&run.final_model, &task),
            sign_accuracy(&run.average_model, &task),
            empirical_risk(run.final_model.as_slice(), &task, &params)?,
        );
    }
    Ok(())
}
