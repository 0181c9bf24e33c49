//! Empirical checks of the convergence guarantees on a small synthetic task.
//!
//! * [`check_strongly_convex_bound`] compares the measured mean suboptimality
//!   of collaborative training under step `2/(gamma t)` with the closed-form
//!   bound, per (epsilon, batch) grid point, as a median over seeds.
//! * [`check_distance_rate`] fits the log-log slope of the summed squared
//!   distance of the global and local models to `w*` under adaptive training
//!   with step `1/(a gamma t)`.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::sweep::median;
use crate::adaptive::{run_adaptive, AdaptiveConfig, SchedulerMode};
use crate::bounds::{bound_strongly_convex_collaborative, BoundInputs};
use crate::collaborative::{run_collaborative, CollaborativeConfig, StepSchedule};
use crate::data::{gaussian_blobs, normalize_rows, partition, BinaryTask, SyntheticConfig};
use crate::error::{Error, Result};
use crate::linalg::{DenseVector, RngStream};
use crate::loss::{empirical_risk, minimize_risk, LossParams};
use crate::privacy::PrivacySpec;

/// A binary task: two Gaussian blobs with unit-norm rows, class 0 positive.
pub fn synthetic_binary_task(dim: usize, samples: usize, seed: u64) -> Result<BinaryTask> {
    let cfg = SyntheticConfig {
        classes: 2,
        dim,
        separation: 1.0,
        spread: 1.0,
        samples,
    };
    let mut raw = gaussian_blobs(&cfg, &mut RngStream::derive(seed, "synthetic", 0))?;
    normalize_rows(&mut raw.features);
    let labels = raw.labels.iter().map(|&c| if c == 0 { 1.0 } else { -1.0 }).collect();
    BinaryTask::new(std::sync::Arc::new(raw.features), labels, 0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheckConfig {
    pub dim: usize,
    pub samples: usize,
    pub lambda: f64,
    pub epsilons: Vec<f64>,
    pub batches: Vec<usize>,
    pub seeds: Vec<u64>,
    pub data_seed: u64,
}

impl Default for BoundCheckConfig {
    fn default() -> Self {
        BoundCheckConfig {
            dim: 5,
            samples: 2000,
            lambda: 0.1,
            epsilons: vec![0.3, 0.6, 0.999],
            batches: vec![1, 10],
            seeds: (1..=10).collect(),
            data_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheckRow {
    pub epsilon: f64,
    pub batch: usize,
    /// Median over seeds of `(1/T) sum_t F(w_t) - F(w*)`.
    pub measured: f64,
    pub bound: f64,
}

impl BoundCheckRow {
    pub fn holds(&self) -> bool {
        self.measured <= self.bound
    }
}

/// Mean of `F` over the iterates at which gradients were taken, minus `F(w*)`.
pub fn mean_suboptimality(
    trajectory: &[DenseVector],
    task: &BinaryTask,
    p: &LossParams,
    optimum: f64,
) -> Result<f64> {
    if trajectory.len() < 2 {
        return Err(Error::invalid("trajectory needs at least one step"));
    }
    let iterates = &trajectory[..trajectory.len() - 1];
    let mut sum = 0.0;
    for w in iterates {
        sum += empirical_risk(w.as_slice(), task, p)?;
    }
    Ok(sum / iterates.len() as f64 - optimum)
}

/// Single-node collaborative runs with radius `1/lambda` and step
/// `2/(lambda t)`; `delta = 1/n^2`.
pub fn check_strongly_convex_bound(cfg: &BoundCheckConfig) -> Result<Vec<BoundCheckRow>> {
    let task = synthetic_binary_task(cfg.dim, cfg.samples, cfg.data_seed)?;
    let params = LossParams::new(cfg.lambda, 1.0 / cfg.lambda)?;
    let all: Vec<usize> = (0..task.len()).collect();
    let w_star = minimize_risk(&task, &all, &params, 5000)?;
    let f_star = empirical_risk(w_star.as_slice(), &task, &params)?;
    let delta = crate::privacy::delta_for(cfg.samples);
    let mut rows = Vec::new();
    for &eps in &cfg.epsilons {
        let spec = PrivacySpec::new(eps, delta)?;
        for &b in &cfg.batches {
            let mut measured = Vec::with_capacity(cfg.seeds.len());
            let mut iterations = 0;
            for &seed in &cfg.seeds {
                let part = partition(task.len(), 1, task.len(), &mut RngStream::derive(seed, "partition", 0))?;
                let run = run_collaborative(
                    &task,
                    &part,
                    &CollaborativeConfig {
                        schedule: StepSchedule::StronglyConvex { gamma: cfg.lambda },
                        privacy: Some(spec),
                        record_trajectory: true,
                        ..CollaborativeConfig::new(b, 0.0, params, seed)
                    },
                )?;
                iterations = run.steps.len();
                measured.push(mean_suboptimality(&run.trajectory, &task, &params, f_star)?);
            }
            let x = BoundInputs::for_loss(&params, &spec, b, cfg.samples, iterations, 0.0);
            rows.push(BoundCheckRow {
                epsilon: eps,
                batch: b,
                measured: median(&measured),
                bound: bound_strongly_convex_collaborative(&x)?.total(),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateCheckConfig {
    pub dim: usize,
    pub samples: usize,
    pub lambda: f64,
    pub nodes: usize,
    pub batch: usize,
    /// Step-size scale in `1/(a gamma t)`.
    pub a: f64,
    pub min_action_probability: f64,
    pub seeds: Vec<u64>,
    /// Fit only rounds `t >= fit_from * T`.
    pub fit_from: f64,
    pub data_seed: u64,
}

impl Default for RateCheckConfig {
    fn default() -> Self {
        RateCheckConfig {
            dim: 5,
            samples: 2000,
            lambda: 0.1,
            nodes: 4,
            batch: 1,
            a: 0.5,
            min_action_probability: 0.05,
            seeds: (1..=10).collect(),
            fit_from: 0.1,
            data_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateCheck {
    /// Mean over seeds of the summed squared distance after each round.
    pub distance: Vec<f64>,
    /// Least-squares slope of `ln distance` against `ln t` over the fit range.
    pub slope: f64,
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    sxy / sxx
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Noise-free adaptive training in parallel rounds (each node acts once per
/// round) under step `1/(a lambda t)`.
pub fn check_distance_rate(cfg: &RateCheckConfig) -> Result<RateCheck> {
    let task = synthetic_binary_task(cfg.dim, cfg.samples, cfg.data_seed)?;
    let params = LossParams::new(cfg.lambda, 1.0 / cfg.lambda)?;
    let all: Vec<usize> = (0..task.len()).collect();
    let w_star = minimize_risk(&task, &all, &params, 5000)?;
    let per_node = cfg.samples / cfg.nodes;
    let mut total: Vec<f64> = Vec::new();
    for &seed in &cfg.seeds {
        let part = partition(task.len(), cfg.nodes, per_node, &mut RngStream::derive(seed, "partition", 0))?;
        let mut acfg = AdaptiveConfig::new(cfg.batch, 0.0, params, seed);
        acfg.schedule = StepSchedule::Scaled { a: cfg.a, gamma: cfg.lambda };
        acfg.mode = SchedulerMode::ParallelRound;
        acfg.min_action_probability = cfg.min_action_probability;
        acfg.controller.anneal_steps = (per_node / (2 * cfg.batch)).max(1) as u64;
        acfg.record_trajectory = true;
        let run = run_adaptive(&task, &part, &acfg)?;
        let d: Vec<f64> = run
            .global_trajectory
            .iter()
            .zip(&run.local_trajectory)
            .skip(1)
            .map(|(g, locals)| {
                sq_dist(g.as_slice(), w_star.as_slice())
                    + locals
                        .iter()
                        .map(|l| sq_dist(l.as_slice(), w_star.as_slice()))
                        .sum::<f64>()
            })
            .collect();
        if total.is_empty() {
            total = vec![0.0; d.len()];
        }
        for (t, v) in total.iter_mut().zip(&d) {
            *t += v;
        }
    }
    let k = cfg.seeds.len().max(1) as f64;
    let distance: Vec<f64> = total.into_iter().map(|v| v / k).collect();
    let rounds = distance.len();
    let start = ((cfg.fit_from * rounds as f64).ceil() as usize).max(1);
    if rounds < start + 2 {
        return Err(Error::invalid("too few rounds to fit a rate"));
    }
    let xs: Vec<f64> = (start..=rounds).map(|t| (t as f64).ln()).collect();
    let ys: Vec<f64> = distance[start - 1..].iter().map(|d| d.ln()).collect();
    Ok(RateCheck {
        slope: fit_slope(&xs, &ys),
        distance,
    })
}

pub fn write_bound_check_csv(rows: &[BoundCheckRow], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "epsilon,batch,measured,bound,holds")?;
    for r in rows {
        writeln!(f, "{},{},{},{},{}", r.epsilon, r.batch, r.measured, r.bound, r.holds())?;
    }
    f.flush()?;
    Ok(())
}

pub fn write_rate_csv(check: &RateCheck, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "# slope={}", check.slope)?;
    writeln!(f, "round,distance")?;
    for (t, d) in check.distance.iter().enumerate() {
        writeln!(f, "{},{d}", t + 1)?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let x: Vec<f64> = (1..50).map(|t| (t as f64).ln()).collect();
        let y: Vec<f64> = x.iter().map(|l| 3.0 - 1.5 * l).collect();
        assert!((fit_slope(&x, &y) + 1.5).abs() < 1e-12);
    }

    #[test]
    fn suboptimality_skips_final_iterate() {
        let task = synthetic_binary_task(3, 40, 1).unwrap();
        let p = LossParams::new(0.1, 10.0).unwrap();
        let zero = DenseVector::zeros(3);
        let far = DenseVector::from_vec(vec![100.0, 0.0, 0.0]);
        let s = mean_suboptimality(&[zero.clone(), zero, far], &task, &p, 0.0).unwrap();
        assert!((s - std::f64::consts::LN_2).abs() < 1e-12);
    }
}
