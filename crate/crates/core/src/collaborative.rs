//! Fully collaborative training: every mini-batch, from whichever node holds
//! it, produces one noisy projected step on the shared global model.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{BinaryTask, NodePartition};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{gaussian_vector, project_in_place, DenseVector, RngStream};
use crate::loss::{batch_grad, batch_loss, LossParams};
use crate::privacy::{noise_sigma, sensitivity_step, NoiseNormMode, PrivacyLedger, PrivacySpec};
use crate::sampling::PermutationCursor;

/// Step size as a function of the 1-based global step `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    Constant { eta: f64 },
    /// `2 / (gamma t)`.
    StronglyConvex { gamma: f64 },
    /// `1 / (a gamma t)`.
    Scaled { a: f64, gamma: f64 },
    /// `1 / sqrt(t)`.
    InverseSqrt,
}

impl StepSchedule {
    pub fn eta(&self, t: u64) -> Result<f64> {
        if t == 0 {
            return Err(Error::invalid("step schedules are indexed from t = 1"));
        }
        let t = t as f64;
        match *self {
            StepSchedule::Constant { eta } => {
                if eta > 0.0 {
                    Ok(eta)
                } else {
                    Err(Error::invalid(format!("constant step size must be > 0, got {eta}")))
                }
            }
            StepSchedule::StronglyConvex { gamma } => {
                if gamma > 0.0 {
                    Ok(2.0 / (gamma * t))
                } else {
                    Err(Error::invalid("decaying schedule needs gamma > 0 (set lambda > 0)"))
                }
            }
            StepSchedule::Scaled { a, gamma } => {
                if gamma > 0.0 && a > 0.0 {
                    Ok(1.0 / (a * gamma * t))
                } else {
                    Err(Error::invalid("1/(a gamma t) schedule needs a > 0 and gamma > 0"))
                }
            }
            StepSchedule::InverseSqrt => Ok(1.0 / t.sqrt()),
        }
    }
}

/// Which node commits the next global step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeScheduler {
    /// Node `(t - 1) mod M`, skipping nodes with no data left.
    #[default]
    RoundRobin,
    /// Uniform over nodes with data left.
    Random,
}

impl NodeScheduler {
    /// Picks among `active` (node ids with data left, ascending).
    pub(crate) fn pick(self, t: u64, nodes: usize, active: &[bool], rng: &mut RngStream) -> Option<usize> {
        match self {
            NodeScheduler::RoundRobin => {
                let start = ((t - 1) % nodes as u64) as usize;
                (0..nodes).map(|k| (start + k) % nodes).find(|&m| active[m])
            }
            NodeScheduler::Random => {
                let ids: Vec<usize> = (0..nodes).filter(|&m| active[m]).collect();
                if ids.is_empty() {
                    None
                } else {
                    Some(ids[rng.below(ids.len())])
                }
            }
        }
    }
}

/// The shared model plus who last wrote it.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalRegistry {
    pub model: DenseVector,
    pub last_updater: Option<usize>,
    pub step: u64,
}

impl GlobalRegistry {
    pub fn new(dim: usize) -> Self {
        GlobalRegistry {
            model: DenseVector::zeros(dim),
            last_updater: None,
            step: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollaborativeConfig {
    pub batch_size: usize,
    pub schedule: StepSchedule,
    /// `None` trains without noise.
    pub privacy: Option<PrivacySpec>,
    pub params: LossParams,
    pub noise_mode: NoiseNormMode,
    pub scheduler: NodeScheduler,
    pub seed: u64,
    /// Keep every iterate (memory grows with the number of steps).
    pub record_trajectory: bool,
}

impl CollaborativeConfig {
    pub fn new(batch_size: usize, eta: f64, params: LossParams, seed: u64) -> Self {
        CollaborativeConfig {
            batch_size,
            schedule: StepSchedule::Constant { eta },
            privacy: None,
            params,
            noise_mode: NoiseNormMode::PerCoordinate,
            scheduler: NodeScheduler::RoundRobin,
            seed,
            record_trajectory: false,
        }
    }
}

/// Trace of one committed step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepInfo {
    pub step: u64,
    pub node: usize,
    pub eta: f64,
    /// Per-coordinate noise standard deviation actually applied.
    pub sigma: f64,
    pub sensitivity: f64,
    pub batch_len: usize,
    /// Mean loss on the batch before the update.
    pub batch_loss: f64,
}

/// Standard deviation per coordinate for a step of size `eta` on a batch of
/// `batch_len` samples; zero when training without noise.
pub fn step_sigma(
    privacy: Option<&PrivacySpec>,
    delta2: f64,
    mode: NoiseNormMode,
    dim: usize,
) -> f64 {
    match privacy {
        Some(spec) => mode.coordinate_sigma(noise_sigma(spec, delta2), dim),
        None => 0.0,
    }
}

/// `w <- Proj_R(w - eta * grad_D(w) - A)`, `A ~ N(0, sigma^2 I)`.
#[allow(clippy::too_many_arguments)]
pub fn noisy_step(
    w: &mut [f64],
    task: &BinaryTask,
    batch: &[usize],
    eta: f64,
    sigma: f64,
    params: &LossParams,
    noise_rng: &mut RngStream,
) -> Result<()> {
    let g = batch_grad(w, task, batch, params)?;
    let noise = gaussian_vector(noise_rng, w.len(), sigma)?;
    for ((wi, gi), ai) in w.iter_mut().zip(g.as_slice()).zip(noise.as_slice()) {
        *wi = *wi - eta * gi - ai;
    }
    project_in_place(w, params.radius);
    Ok(())
}

/// One committed global step by `node` on `batch`.
#[allow(clippy::too_many_arguments)]
pub fn collaborative_step(
    registry: &mut GlobalRegistry,
    node: usize,
    task: &BinaryTask,
    batch: &[usize],
    eta: f64,
    cfg: &CollaborativeConfig,
    ledger: &mut PrivacyLedger,
    noise_rng: &mut RngStream,
) -> Result<StepInfo> {
    check_dim(task.dim(), registry.model.len())?;
    ledger.record(batch)?;
    let l = cfg.params.constants().l;
    let delta2 = sensitivity_step(eta, l, batch.len());
    let sigma = step_sigma(cfg.privacy.as_ref(), delta2, cfg.noise_mode, task.dim());
    let before = batch_loss(registry.model.as_slice(), task, batch, &cfg.params);
    noisy_step(
        registry.model.as_mut_slice(),
        task,
        batch,
        eta,
        sigma,
        &cfg.params,
        noise_rng,
    )?;
    registry.step += 1;
    registry.last_updater = Some(node);
    ledger.record_step(registry.step, cfg.privacy.as_ref(), sigma);
    Ok(StepInfo {
        step: registry.step,
        node,
        eta,
        sigma,
        sensitivity: delta2,
        batch_len: batch.len(),
        batch_loss: before,
    })
}

#[derive(Debug, Clone)]
pub struct CollaborativeRun {
    pub final_model: DenseVector,
    /// Mean of the iterates at which gradients were taken (`w_0 .. w_{T-1}`).
    pub average_model: DenseVector,
    /// `w_0 .. w_T` when recording was requested, else empty.
    pub trajectory: Vec<DenseVector>,
    pub steps: Vec<StepInfo>,
    pub ledger: PrivacyLedger,
}

/// Per-node cursors, one RNG stream per node.
pub(crate) fn node_cursors(
    partition: &NodePartition,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<PermutationCursor>> {
    partition
        .nodes
        .iter()
        .enumerate()
        .map(|(m, idx)| {
            PermutationCursor::new(idx, batch_size, &mut RngStream::derive(seed, "cursor", m as u64))
        })
        .collect()
}

/// Single pass over every node's data: `T = sum_m ceil(n_m / b)` steps.
pub fn run_collaborative(
    task: &BinaryTask,
    partition: &NodePartition,
    cfg: &CollaborativeConfig,
) -> Result<CollaborativeRun> {
    let nodes = partition.node_count();
    if nodes == 0 {
        return Err(Error::invalid("no nodes"));
    }
    let dim = task.dim();
    let mut cursors = node_cursors(partition, cfg.batch_size, cfg.seed)?;
    let mut noise_rng = RngStream::derive(cfg.seed, "noise", 0);
    let mut sched_rng = RngStream::derive(cfg.seed, "scheduler", 0);
    let mut registry = GlobalRegistry::new(dim);
    let mut ledger = PrivacyLedger::new(1);
    let mut steps = Vec::new();
    let mut trajectory = Vec::new();
    let mut sum = vec![0.0; dim];
    if cfg.record_trajectory {
        trajectory.push(registry.model.clone());
    }
    loop {
        let t = registry.step + 1;
        let active: Vec<bool> = cursors.iter().map(|c| !c.is_exhausted()).collect();
        let Some(node) = cfg.scheduler.pick(t, nodes, &active, &mut sched_rng) else {
            break;
        };
        let batch = cursors[node].next_batch().expect("active cursor has a batch");
        let eta = cfg.schedule.eta(t)?;
        for (s, w) in sum.iter_mut().zip(registry.model.as_slice()) {
            *s += w;
        }
        let info = collaborative_step(
            &mut registry,
            node,
            task,
            &batch,
            eta,
            cfg,
            &mut ledger,
            &mut noise_rng,
        )?;
        steps.push(info);
        if cfg.record_trajectory {
            trajectory.push(registry.model.clone());
        }
    }
    let count = steps.len().max(1) as f64;
    Ok(CollaborativeRun {
        final_model: registry.model,
        average_model: DenseVector::from_vec(sum.into_iter().map(|s| s / count).collect()),
        trajectory,
        steps,
        ledger,
    })
}

/// Writes `step,node,eta,sigma,sensitivity,batch_len,batch_loss`.
pub fn write_steps_csv(steps: &[StepInfo], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "step,node,eta,sigma,sensitivity,batch_len,batch_loss")?;
    for s in steps {
        writeln!(
            f,
            "{},{},{},{},{},{},{}",
            s.step, s.node, s.eta, s.sigma, s.sensitivity, s.batch_len, s.batch_loss
        )?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::partition;

    #[test]
    fn schedules() {
        let c = StepSchedule::Constant { eta: 0.1 };
        assert_eq!(c.eta(1).unwrap(), 0.1);
        assert_eq!(c.eta(1000).unwrap(), 0.1);
        let s = StepSchedule::StronglyConvex { gamma: 1e-4 };
        assert!((s.eta(1).unwrap() - 20000.0).abs() < 1e-9);
        assert_eq!(s.eta(2).unwrap() * 2.0, s.eta(1).unwrap());
        assert!(StepSchedule::StronglyConvex { gamma: 0.0 }.eta(1).is_err());
        assert_eq!(StepSchedule::InverseSqrt.eta(4).unwrap(), 0.5);
        assert!(c.eta(0).is_err());
    }

    fn toy() -> BinaryTask {
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|i| {
                let a = f64::from(i) * 0.5;
                vec![a.cos(), a.sin()]
            })
            .collect();
        let labels = (0..12).map(|i| if i % 3 == 0 { 1.0 } else { -1.0 }).collect();
        BinaryTask::from_rows(&rows, labels).unwrap()
    }

    #[test]
    fn zero_gradient_zero_noise_keeps_model() {
        let task = BinaryTask::from_rows(&[vec![0.0, 0.0]], vec![1.0]).unwrap();
        let params = LossParams::new(0.0, 10.0).unwrap();
        let cfg = CollaborativeConfig::new(1, 0.1, params, 1);
        let mut reg = GlobalRegistry::new(2);
        let mut ledger = PrivacyLedger::new(1);
        collaborative_step(&mut reg, 0, &task, &[0], 0.1, &cfg, &mut ledger, &mut RngStream::new(0))
            .unwrap();
        assert_eq!(reg.model.as_slice(), &[0.0, 0.0]);
        assert_eq!((reg.step, reg.last_updater), (1, Some(0)));
    }

    #[test]
    fn single_pass_and_determinism() {
        let task = toy();
        let p = partition(12, 3, 4, &mut RngStream::new(2)).unwrap();
        let params = LossParams::new(0.0, 50.0).unwrap();
        let mut cfg = CollaborativeConfig::new(3, 0.1, params, 9);
        cfg.privacy = Some(PrivacySpec::new(0.5, 1e-4).unwrap());
        let a = run_collaborative(&task, &p, &cfg).unwrap();
        let b = run_collaborative(&task, &p, &cfg).unwrap();
        assert_eq!(a.final_model, b.final_model);
        assert_eq!(a.steps.len(), 6);
        assert!(a.ledger.all_used_exactly(&p.union(), 1));
        let nodes: Vec<usize> = a.steps.iter().map(|s| s.node).collect();
        assert_eq!(nodes, vec![0, 1, 2, 0, 1, 2]);
        cfg.scheduler = NodeScheduler::Random;
        let r = run_collaborative(&task, &p, &cfg).unwrap();
        assert_eq!(r.steps.len(), 6);
        assert!(r.ledger.all_used_exactly(&p.union(), 1));
    }
}
