//! Adaptive training: each node keeps a private local model and, per
//! mini-batch, its deep-Q controller chooses either a noise-free local step
//! `w_L <- w_L - 2 eta grad(w_L)` or a noisy global commit
//! `w_G <- (w_G + w_L)/2 - eta grad(w_G) - A`, after which `w_L <- w_G`.
//!
//! Noise for a global commit is calibrated to the largest per-step
//! sensitivity over the local steps taken since the node's previous commit,
//! current step included.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::collaborative::{node_cursors, step_sigma, GlobalRegistry, NodeScheduler, StepSchedule};
use crate::data::{BinaryTask, NodePartition};
use crate::deep_q::{anneal_explr, build_state, select_action, Action, ControllerConfig, QController, Transition};
use crate::error::{Error, Result};
use crate::linalg::{gaussian_vector, project_in_place, DenseVector, RngStream};
use crate::loss::{batch_grad, batch_loss, LossParams};
use crate::privacy::{sensitivity_step, sensitivity_window, NoiseNormMode, PrivacyLedger, PrivacySpec};
use crate::sampling::PermutationCursor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerMode {
    /// One node acts per tick, round-robin.
    #[default]
    Sequential,
    /// Every node with data left acts once per tick, in node order; global
    /// commits within a tick are serialized by node index.
    ParallelRound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerMode {
    /// Deep-Q controller with ε-greedy exploration.
    #[default]
    Learned,
    /// Always take the given action; no controller is built.
    Fixed(Action),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    pub batch_size: usize,
    pub schedule: StepSchedule,
    pub privacy: Option<PrivacySpec>,
    pub params: LossParams,
    pub noise_mode: NoiseNormMode,
    pub mode: SchedulerMode,
    pub controller: ControllerConfig,
    pub controller_mode: ControllerMode,
    /// Lower bound on the probability of each action; raises the exploration
    /// rate to at least twice this value.
    pub min_action_probability: f64,
    pub seed: u64,
    /// Keep the global and local models after every tick.
    pub record_trajectory: bool,
}

impl AdaptiveConfig {
    pub fn new(batch_size: usize, eta: f64, params: LossParams, seed: u64) -> Self {
        AdaptiveConfig {
            batch_size,
            schedule: StepSchedule::Constant { eta },
            privacy: None,
            params,
            noise_mode: NoiseNormMode::PerCoordinate,
            mode: SchedulerMode::Sequential,
            controller: ControllerConfig::default(),
            controller_mode: ControllerMode::Learned,
            min_action_probability: 0.0,
            seed,
            record_trajectory: false,
        }
    }
}

/// One row of the action log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ActionRecord {
    pub tick: u64,
    pub node: usize,
    pub action: Action,
    pub eta: f64,
    /// Per-coordinate noise standard deviation (0 for local steps).
    pub sigma: f64,
    /// Sensitivity used for the noise (0 for local steps).
    pub sensitivity: f64,
    /// Steps in the node's window, current step included.
    pub window_len: usize,
    pub batch_len: usize,
    /// Always false for local steps.
    pub noise_added: bool,
}

/// One controller decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControllerTraceRow {
    pub node: usize,
    /// Decision index within the node.
    pub step: u64,
    pub p_explr: f64,
    pub q_local: f64,
    pub q_global: f64,
    pub action: Action,
    /// Reward credited to this decision (NaN if never observed).
    pub reward: f64,
}

#[derive(Debug, Clone)]
pub struct AdaptiveRun {
    pub global_model: DenseVector,
    pub local_models: Vec<DenseVector>,
    /// Mean of the global model over ticks (`w_G` before each tick).
    pub average_global: DenseVector,
    pub actions: Vec<ActionRecord>,
    pub controller_trace: Vec<ControllerTraceRow>,
    /// Fraction of acting nodes that committed globally, per tick.
    pub global_fraction: Vec<f64>,
    pub global_updates: u64,
    pub ticks: u64,
    /// Global model after every tick, starting with the initial model.
    pub global_trajectory: Vec<DenseVector>,
    /// Local models after every tick, starting with the initial models.
    pub local_trajectory: Vec<Vec<DenseVector>>,
    pub ledger: PrivacyLedger,
}

struct Pending {
    state: Vec<f64>,
    action: Action,
    batch: Vec<usize>,
    trace_row: Option<usize>,
}

struct Node {
    local: Vec<f64>,
    cursor: PermutationCursor,
    controller: Option<QController>,
    rng: RngStream,
    window: Vec<(f64, usize)>,
    pending: Option<Pending>,
    decisions: u64,
}

struct Shared<'a> {
    task: &'a BinaryTask,
    cfg: &'a AdaptiveConfig,
    registry: GlobalRegistry,
    ledger: PrivacyLedger,
    noise_rng: RngStream,
    actions: Vec<ActionRecord>,
    trace: Vec<ControllerTraceRow>,
}

/// Local step: `w_L <- Proj_R(w_L - 2 eta grad_D(w_L))`. No noise.
pub fn local_step(
    local: &mut [f64],
    task: &BinaryTask,
    batch: &[usize],
    eta: f64,
    params: &LossParams,
) -> Result<()> {
    let g = batch_grad(local, task, batch, params)?;
    for (w, gi) in local.iter_mut().zip(g.as_slice()) {
        *w -= 2.0 * eta * gi;
    }
    project_in_place(local, params.radius);
    Ok(())
}

/// Global commit: `w_G <- Proj_R((w_G + w_L)/2 - eta grad_D(w_G) - A)` with
/// `A ~ N(0, sigma^2 I)`, then `w_L <- w_G`.
pub fn global_step(
    global: &mut [f64],
    local: &mut [f64],
    task: &BinaryTask,
    batch: &[usize],
    eta: f64,
    sigma: f64,
    params: &LossParams,
    noise_rng: &mut RngStream,
) -> Result<()> {
    let g = batch_grad(global, task, batch, params)?;
    let noise = gaussian_vector(noise_rng, global.len(), sigma)?;
    for (((wg, wl), gi), ai) in global
        .iter_mut()
        .zip(local.iter())
        .zip(g.as_slice())
        .zip(noise.as_slice())
    {
        *wg = (*wg + *wl) / 2.0 - eta * gi - ai;
    }
    project_in_place(global, params.radius);
    local.copy_from_slice(global);
    Ok(())
}

impl Shared<'_> {
    fn act(&mut self, node: &mut Node, id: usize, tick: u64, eta: f64) -> Result<Action> {
        let cfg = self.cfg;
        let params = &cfg.params;
        let batch = node.cursor.next_batch().expect("active node has a batch");
        let last = node.cursor.is_exhausted();

        let cur_loss = batch_loss(&node.local, self.task, &batch, params);
        let state = build_state(&node.local, cur_loss);
        if let (Some(ctrl), Some(prev)) = (node.controller.as_mut(), node.pending.take()) {
            let reward = -batch_loss(&node.local, self.task, &prev.batch, params);
            if let Some(r) = prev.trace_row {
                self.trace[r].reward = reward;
            }
            ctrl.record_and_train(
                Transition {
                    state: prev.state,
                    action: prev.action,
                    reward,
                    next_state: state.clone(),
                    terminal: false,
                },
                &mut node.rng,
            )?;
        }

        let mut trace_row = None;
        let action = match (&mut node.controller, cfg.controller_mode) {
            (_, ControllerMode::Fixed(a)) => a,
            (Some(ctrl), ControllerMode::Learned) => {
                let p = anneal_explr(node.decisions, ctrl.cfg.anneal_steps)
                    .max((2.0 * cfg.min_action_probability).min(1.0));
                let d = select_action(ctrl.online(), &state, p, &mut node.rng)?;
                trace_row = Some(self.trace.len());
                self.trace.push(ControllerTraceRow {
                    node: id,
                    step: node.decisions,
                    p_explr: d.p_explr,
                    q_local: d.q[0],
                    q_global: d.q[1],
                    action: d.action,
                    reward: f64::NAN,
                });
                d.action
            }
            (None, ControllerMode::Learned) => unreachable!("learned mode builds controllers"),
        };
        node.decisions += 1;

        self.ledger.record(&batch)?;
        node.window.push((eta, batch.len()));
        let window_len = node.window.len();
        let (sigma, sensitivity) = match action {
            Action::Local => {
                local_step(&mut node.local, self.task, &batch, eta, params)?;
                (0.0, 0.0)
            }
            Action::Global => {
                let c = params.constants();
                let delta2 = match cfg.privacy {
                    Some(_) => sensitivity_window(&node.window, c.l, c.mu)?,
                    None => node
                        .window
                        .iter()
                        .map(|&(e, b)| sensitivity_step(e, c.l, b))
                        .fold(0.0, f64::max),
                };
                let sigma = step_sigma(cfg.privacy.as_ref(), delta2, cfg.noise_mode, self.task.dim());
                global_step(
                    self.registry.model.as_mut_slice(),
                    &mut node.local,
                    self.task,
                    &batch,
                    eta,
                    sigma,
                    params,
                    &mut self.noise_rng,
                )?;
                self.registry.step += 1;
                self.registry.last_updater = Some(id);
                self.ledger
                    .record_step(self.registry.step, cfg.privacy.as_ref(), sigma);
                node.window.clear();
                (sigma, delta2)
            }
        };
        self.actions.push(ActionRecord {
            tick,
            node: id,
            action,
            eta,
            sigma,
            sensitivity,
            window_len,
            batch_len: batch.len(),
            noise_added: action == Action::Global && sigma > 0.0,
        });

        if let Some(ctrl) = node.controller.as_mut() {
            if last {
                let reward = -batch_loss(&node.local, self.task, &batch, params);
                if let Some(r) = trace_row {
                    self.trace[r].reward = reward;
                }
                ctrl.record_and_train(
                    Transition {
                        state: state.clone(),
                        action,
                        reward,
                        next_state: state,
                        terminal: true,
                    },
                    &mut node.rng,
                )?;
            } else {
                node.pending = Some(Pending {
                    state,
                    action,
                    batch,
                    trace_row,
                });
            }
        }
        Ok(action)
    }
}

/// Single pass over every node's data under the configured scheduler.
pub fn run_adaptive(
    task: &BinaryTask,
    partition: &NodePartition,
    cfg: &AdaptiveConfig,
) -> Result<AdaptiveRun> {
    let m = partition.node_count();
    if m == 0 {
        return Err(Error::invalid("no nodes"));
    }
    let dim = task.dim();
    let cursors = node_cursors(partition, cfg.batch_size, cfg.seed)?;
    let mut nodes: Vec<Node> = cursors
        .into_iter()
        .enumerate()
        .map(|(id, cursor)| {
            let mut rng = RngStream::derive(cfg.seed, "controller", id as u64);
            let controller = match cfg.controller_mode {
                ControllerMode::Learned => Some(QController::new(dim + 2, cfg.controller, &mut rng)),
                ControllerMode::Fixed(_) => None,
            };
            Node {
                local: vec![0.0; dim],
                cursor,
                controller,
                rng,
                window: Vec::new(),
                pending: None,
                decisions: 0,
            }
        })
        .collect();
    let mut shared = Shared {
        task,
        cfg,
        registry: GlobalRegistry::new(dim),
        ledger: PrivacyLedger::new(1),
        noise_rng: RngStream::derive(cfg.seed, "noise", 0),
        actions: Vec::new(),
        trace: Vec::new(),
    };
    let mut sched_rng = RngStream::derive(cfg.seed, "scheduler", 0);
    let mut global_fraction = Vec::new();
    let mut global_trajectory = Vec::new();
    let mut local_trajectory = Vec::new();
    let snapshot = |nodes: &[Node]| -> Vec<DenseVector> {
        nodes.iter().map(|n| DenseVector::from_vec(n.local.clone())).collect()
    };
    if cfg.record_trajectory {
        global_trajectory.push(shared.registry.model.clone());
        local_trajectory.push(snapshot(&nodes));
    }
    let mut sum = vec![0.0; dim];
    let mut tick = 0u64;
    loop {
        let active: Vec<bool> = nodes.iter().map(|n| !n.cursor.is_exhausted()).collect();
        if !active.iter().any(|&a| a) {
            break;
        }
        tick += 1;
        let eta = cfg.schedule.eta(tick)?;
        for (s, w) in sum.iter_mut().zip(shared.registry.model.as_slice()) {
            *s += w;
        }
        let acting: Vec<usize> = match cfg.mode {
            SchedulerMode::Sequential => NodeScheduler::RoundRobin
                .pick(tick, m, &active, &mut sched_rng)
                .into_iter()
                .collect(),
            SchedulerMode::ParallelRound => (0..m).filter(|&i| active[i]).collect(),
        };
        let mut globals = 0usize;
        for &id in &acting {
            if shared.act(&mut nodes[id], id, tick, eta)? == Action::Global {
                globals += 1;
            }
        }
        global_fraction.push(globals as f64 / acting.len() as f64);
        if cfg.record_trajectory {
            global_trajectory.push(shared.registry.model.clone());
            local_trajectory.push(snapshot(&nodes));
        }
    }
    let ticks = tick.max(1) as f64;
    Ok(AdaptiveRun {
        global_model: shared.registry.model.clone(),
        local_models: snapshot(&nodes),
        average_global: DenseVector::from_vec(sum.into_iter().map(|s| s / ticks).collect()),
        global_updates: shared.registry.step,
        actions: shared.actions,
        controller_trace: shared.trace,
        global_fraction,
        ticks: tick,
        global_trajectory,
        local_trajectory,
        ledger: shared.ledger,
    })
}

/// Writes `tick,node,action,eta,sigma,sensitivity,window_len,batch_len`.
pub fn write_actions_csv(actions: &[ActionRecord], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "tick,node,action,eta,sigma,sensitivity,window_len,batch_len")?;
    for a in actions {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{}",
            a.tick, a.node, a.action, a.eta, a.sigma, a.sensitivity, a.window_len, a.batch_len
        )?;
    }
    f.flush()?;
    Ok(())
}

/// Writes `node,step,p_explr,q_local,q_global,action,reward`.
pub fn write_controller_trace_csv(rows: &[ControllerTraceRow], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "node,step,p_explr,q_local,q_global,action,reward")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{},{},{}",
            r.node, r.step, r.p_explr, r.q_local, r.q_global, r.action, r.reward
        )?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::partition;

    fn toy(n: usize) -> BinaryTask {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let a = i as f64 * 0.7;
                vec![a.cos(), a.sin()]
            })
            .collect();
        let labels = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        BinaryTask::from_rows(&rows, labels).unwrap()
    }

    #[test]
    fn midpoint_when_gradient_vanishes() {
        let task = BinaryTask::from_rows(&[vec![0.0, 0.0]], vec![1.0]).unwrap();
        let params = LossParams::new(0.0, 10.0).unwrap();
        let mut g = vec![1.0, 3.0];
        let mut l = vec![3.0, -1.0];
        global_step(&mut g, &mut l, &task, &[0], 0.1, 0.0, &params, &mut RngStream::new(0)).unwrap();
        assert_eq!(g, vec![2.0, 1.0]);
        assert_eq!(l, g);
    }

    #[test]
    fn local_step_length_is_twice_eta_grad() {
        let task = toy(4);
        let params = LossParams::new(0.0, 10.0).unwrap();
        let w0 = vec![0.2, -0.1];
        let g = batch_grad(&w0, &task, &[0, 1], &params).unwrap();
        let mut w = w0.clone();
        local_step(&mut w, &task, &[0, 1], 0.1, &params).unwrap();
        let moved = ((w[0] - w0[0]).powi(2) + (w[1] - w0[1]).powi(2)).sqrt();
        assert!((moved - 0.2 * g.norm()).abs() < 1e-15);
    }

    #[test]
    fn always_local_never_touches_global() {
        let task = toy(24);
        let p = partition(24, 3, 8, &mut RngStream::new(1)).unwrap();
        let params = LossParams::new(0.0, 50.0).unwrap();
        let mut cfg = AdaptiveConfig::new(4, 0.1, params, 3);
        cfg.controller_mode = ControllerMode::Fixed(Action::Local);
        cfg.privacy = Some(PrivacySpec::new(0.5, 1e-4).unwrap());
        let run = run_adaptive(&task, &p, &cfg).unwrap();
        assert_eq!(run.global_model.as_slice(), &[0.0, 0.0]);
        assert_eq!(run.global_updates, 0);
        assert!(run.local_models.iter().all(|w| w.norm() > 0.0));
        assert!(run.ledger.all_used_exactly(&p.union(), 1));
    }

    #[test]
    fn learned_controller_runs_and_windows_reset() {
        let task = toy(40);
        let p = partition(40, 2, 20, &mut RngStream::new(1)).unwrap();
        let params = LossParams::new(0.0, 50.0).unwrap();
        let mut cfg = AdaptiveConfig::new(2, 0.1, params, 5);
        cfg.privacy = Some(PrivacySpec::new(0.5, 1e-4).unwrap());
        cfg.controller.hidden = 8;
        cfg.controller.anneal_steps = 5;
        for mode in [SchedulerMode::Sequential, SchedulerMode::ParallelRound] {
            cfg.mode = mode;
            let run = run_adaptive(&task, &p, &cfg).unwrap();
            assert_eq!(run.actions.len(), 20);
            assert_eq!(run.controller_trace.len(), 20);
            assert!(run.controller_trace.iter().all(|r| r.reward.is_finite()));
            for node in 0..2 {
                let mut expected = 0;
                for a in run.actions.iter().filter(|a| a.node == node) {
                    expected += 1;
                    assert_eq!(a.window_len, expected);
                    if a.action == Action::Global {
                        expected = 0;
                    } else {
                        assert!(!a.noise_added);
                    }
                }
            }
            let again = run_adaptive(&task, &p, &cfg).unwrap();
            assert_eq!(again.global_model, run.global_model);
        }
    }
}
