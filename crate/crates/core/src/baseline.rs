//! Random-walk multi-pass baseline: each iteration a uniformly chosen node
//! makes a noisy global step, every sample may be used up to `passes` times,
//! and each step is private at `(epsilon / passes, delta / passes)`.

use serde::{Deserialize, Serialize};

use crate::collaborative::{
    collaborative_step, node_cursors, CollaborativeConfig, CollaborativeRun, GlobalRegistry,
    NodeScheduler, StepSchedule,
};
use crate::data::{BinaryTask, NodePartition};
use crate::error::{Error, Result};
use crate::linalg::{DenseVector, RngStream};
use crate::loss::LossParams;
use crate::privacy::{NoiseNormMode, PrivacyLedger, PrivacySpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub batch_size: usize,
    pub passes: u32,
    /// Total budget; each step uses `privacy.split(passes)`.
    pub privacy: Option<PrivacySpec>,
    pub params: LossParams,
    pub schedule: StepSchedule,
    pub noise_mode: NoiseNormMode,
    pub seed: u64,
}

impl BaselineConfig {
    pub fn new(batch_size: usize, params: LossParams, seed: u64) -> Self {
        BaselineConfig {
            batch_size,
            passes: 5,
            privacy: None,
            params,
            schedule: StepSchedule::InverseSqrt,
            noise_mode: NoiseNormMode::PerCoordinate,
            seed,
        }
    }
}

pub fn run_multipass_baseline(
    task: &BinaryTask,
    partition: &NodePartition,
    cfg: &BaselineConfig,
) -> Result<CollaborativeRun> {
    let m = partition.node_count();
    if m == 0 || cfg.passes == 0 {
        return Err(Error::invalid("baseline needs nodes and at least one pass"));
    }
    let step_cfg = CollaborativeConfig {
        batch_size: cfg.batch_size,
        schedule: cfg.schedule,
        privacy: cfg.privacy.map(|p| p.split(cfg.passes)),
        params: cfg.params,
        noise_mode: cfg.noise_mode,
        scheduler: NodeScheduler::Random,
        seed: cfg.seed,
        record_trajectory: false,
    };
    let mut cursors = node_cursors(partition, cfg.batch_size, cfg.seed)?;
    let mut reshuffle: Vec<RngStream> = (0..m)
        .map(|i| RngStream::derive(cfg.seed, "reshuffle", i as u64))
        .collect();
    let mut passes = vec![1u32; m];
    let mut noise_rng = RngStream::derive(cfg.seed, "noise", 0);
    let mut sched_rng = RngStream::derive(cfg.seed, "scheduler", 0);
    let mut registry = GlobalRegistry::new(task.dim());
    let mut ledger = PrivacyLedger::new(cfg.passes);
    let mut steps = Vec::new();
    let mut sum = vec![0.0; task.dim()];
    loop {
        let active: Vec<bool> = (0..m)
            .map(|i| !cursors[i].is_exhausted() || passes[i] < cfg.passes)
            .collect();
        let t = registry.step + 1;
        let Some(node) = NodeScheduler::Random.pick(t, m, &active, &mut sched_rng) else {
            break;
        };
        if cursors[node].is_exhausted() {
            cursors[node].restart(&mut reshuffle[node]);
            passes[node] += 1;
        }
        let batch = cursors[node].next_batch().expect("restarted cursor has a batch");
        let eta = cfg.schedule.eta(t)?;
        for (s, w) in sum.iter_mut().zip(registry.model.as_slice()) {
            *s += w;
        }
        steps.push(collaborative_step(
            &mut registry,
            node,
            task,
            &batch,
            eta,
            &step_cfg,
            &mut ledger,
            &mut noise_rng,
        )?);
    }
    let count = steps.len().max(1) as f64;
    Ok(CollaborativeRun {
        final_model: registry.model,
        average_model: DenseVector::from_vec(sum.into_iter().map(|s| s / count).collect()),
        trajectory: Vec::new(),
        steps,
        ledger,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::partition;

    #[test]
    fn every_sample_used_exactly_passes_times() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![f64::from(i).cos(), 1.0]).collect();
        let labels = (0..20).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let task = BinaryTask::from_rows(&rows, labels).unwrap();
        let p = partition(20, 2, 10, &mut RngStream::new(1)).unwrap();
        let mut cfg = BaselineConfig::new(5, LossParams::new(0.0, 50.0).unwrap(), 2);
        cfg.privacy = Some(PrivacySpec::new(0.5, 1e-4).unwrap());
        let run = run_multipass_baseline(&task, &p, &cfg).unwrap();
        assert_eq!(run.steps.len(), 20);
        assert!(run.ledger.all_used_exactly(&p.union(), 5));
        let first = run.ledger.steps()[0];
        assert!((first.epsilon - 0.1).abs() < 1e-15 && (first.delta - 2e-5).abs() < 1e-18);
        assert_eq!(run.steps[3].eta, 0.5);
    }
}
