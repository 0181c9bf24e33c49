//! Per-node deep-Q controller choosing between a local and a global update.
//!
//! The Q-network is two stacked affine layers (input `d + 2` -> hidden ->
//! 2 outputs) with identity activations, trained with Adam on the squared
//! temporal-difference error of replayed transitions against a periodically
//! synchronized target copy.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Local,
    Global,
}

impl Action {
    pub fn index(self) -> usize {
        match self {
            Action::Local => 0,
            Action::Global => 1,
        }
    }

    pub fn from_index(i: usize) -> Action {
        if i == 0 {
            Action::Local
        } else {
            Action::Global
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Local => "local",
            Action::Global => "global",
        })
    }
}

/// `[w_1, ..., w_d, batch mean loss, 1.0]`.
pub fn build_state(w: &[f64], batch_loss: f64) -> Vec<f64> {
    let mut s = Vec::with_capacity(w.len() + 2);
    s.extend_from_slice(w);
    s.push(batch_loss);
    s.push(1.0);
    s
}

/// Linear decay from 1.0 at step 0 to 0.1 at `total_steps`, then flat.
pub fn anneal_explr(step: u64, total_steps: u64) -> f64 {
    const START: f64 = 1.0;
    const END: f64 = 0.1;
    if total_steps == 0 || step >= total_steps {
        return END;
    }
    START + (END - START) * step as f64 / total_steps as f64
}

/// `q = W2 (W1 s + b1) + b2`, parameters stored flat as `[W1, b1, W2, b2]`
/// with row-major weight matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    input: usize,
    hidden: usize,
    params: Vec<f64>,
}

impl QNetwork {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        QNetwork {
            input,
            hidden,
            params: vec![0.0; hidden * input + hidden + 2 * hidden + 2],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(input: usize, hidden: usize, rng: &mut RngStream) -> Self {
        let mut net = QNetwork::zeros(input, hidden);
        let l1 = (6.0 / (input + hidden) as f64).sqrt();
        for v in net.w1_mut() {
            *v = (2.0 * rng.uniform() - 1.0) * l1;
        }
        let l2 = (6.0 / (hidden + 2) as f64).sqrt();
        for v in net.w2_mut() {
            *v = (2.0 * rng.uniform() - 1.0) * l2;
        }
        net
    }

    pub fn input_dim(&self) -> usize {
        self.input
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.input;
        let w2 = b1 + self.hidden;
        let b2 = w2 + 2 * self.hidden;
        (b1, w2, b2)
    }

    fn w1_mut(&mut self) -> &mut [f64] {
        let (b1, _, _) = self.offsets();
        &mut self.params[..b1]
    }

    fn w2_mut(&mut self) -> &mut [f64] {
        let (_, w2, b2) = self.offsets();
        &mut self.params[w2..b2]
    }

    fn hidden_activations(&self, state: &[f64]) -> Vec<f64> {
        let (b1, _, _) = self.offsets();
        (0..self.hidden)
            .map(|j| {
                let row = &self.params[j * self.input..(j + 1) * self.input];
                let z: f64 = row.iter().zip(state).map(|(a, b)| a * b).sum();
                z + self.params[b1 + j]
            })
            .collect()
    }

    /// `(q_local, q_global)`.
    pub fn forward(&self, state: &[f64]) -> Result<[f64; 2]> {
        check_dim(self.input, state.len())?;
        let h = self.hidden_activations(state);
        let (_, w2, b2) = self.offsets();
        let mut q = [0.0; 2];
        for (k, qk) in q.iter_mut().enumerate() {
            let row = &self.params[w2 + k * self.hidden..w2 + (k + 1) * self.hidden];
            *qk = row.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>() + self.params[b2 + k];
        }
        Ok(q)
    }

    /// Adds `coeff * dQ(state, action)/dtheta` into `grad`.
    fn accumulate_grad(&self, state: &[f64], action: Action, coeff: f64, grad: &mut [f64]) {
        let h = self.hidden_activations(state);
        let (b1, w2, b2) = self.offsets();
        let a = action.index();
        for j in 0..self.hidden {
            grad[w2 + a * self.hidden + j] += coeff * h[j];
        }
        grad[b2 + a] += coeff;
        for j in 0..self.hidden {
            let gh = coeff * self.params[w2 + a * self.hidden + j];
            let row = &mut grad[j * self.input..(j + 1) * self.input];
            for (g, s) in row.iter_mut().zip(state) {
                *g += gh * s;
            }
            grad[b1 + j] += gh;
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(size: usize, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; size],
            v: vec![0.0; size],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// FIFO ring buffer of transitions.
#[derive(Debug, Clone, Default)]
pub struct ReplayMemory {
    items: VecDeque<Transition>,
    capacity: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        ReplayMemory {
            items: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// `k` distinct transitions (all of them when fewer are stored).
    pub fn sample(&self, k: usize, rng: &mut RngStream) -> Vec<&Transition> {
        let mut idx: Vec<usize> = (0..self.items.len()).collect();
        if k >= idx.len() {
            return self.items.iter().collect();
        }
        for i in 0..k {
            let j = i + rng.below(idx.len() - i);
            idx.swap(i, j);
        }
        idx[..k].iter().map(|&i| &self.items[i]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub hidden: usize,
    pub memory_capacity: usize,
    pub minibatch: usize,
    /// Discount factor of the bootstrapped target.
    pub gamma_dq: f64,
    /// Controller training steps between target-network refreshes.
    pub sync_period: u64,
    pub learning_rate: f64,
    /// Decisions over which exploration decays from 1.0 to 0.1.
    pub anneal_steps: u64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            hidden: 128,
            memory_capacity: 20,
            minibatch: 10,
            gamma_dq: 0.9,
            sync_period: 50,
            learning_rate: 0.01,
            anneal_steps: 60,
        }
    }
}

/// Outcome of one ε-greedy decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub action: Action,
    pub q: [f64; 2],
    pub p_explr: f64,
    pub explored: bool,
}

#[derive(Debug, Clone)]
pub struct QController {
    pub cfg: ControllerConfig,
    online: QNetwork,
    target: QNetwork,
    adam: Adam,
    memory: ReplayMemory,
    decisions: u64,
    train_steps: u64,
}

impl QController {
    pub fn new(state_dim: usize, cfg: ControllerConfig, rng: &mut RngStream) -> Self {
        let online = QNetwork::glorot(state_dim, cfg.hidden, rng);
        QController::with_network(online, cfg)
    }

    pub fn with_network(online: QNetwork, cfg: ControllerConfig) -> Self {
        let adam = Adam::new(online.params().len(), cfg.learning_rate);
        QController {
            cfg,
            target: online.clone(),
            online,
            adam,
            memory: ReplayMemory::new(cfg.memory_capacity),
            decisions: 0,
            train_steps: 0,
        }
    }

    pub fn online(&self) -> &QNetwork {
        &self.online
    }

    pub fn online_mut(&mut self) -> &mut QNetwork {
        &mut self.online
    }

    pub fn target(&self) -> &QNetwork {
        &self.target
    }

    pub fn memory(&self) -> &ReplayMemory {
        &self.memory
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    /// Exploration probability for the next decision.
    pub fn exploration(&self) -> f64 {
        anneal_explr(self.decisions, self.cfg.anneal_steps)
    }

    /// ε-greedy: a uniform random action with probability `p_explr`,
    /// otherwise the argmax of the online network (ties pick Local).
    pub fn select_action(&mut self, state: &[f64], rng: &mut RngStream) -> Result<Decision> {
        let p = self.exploration();
        self.decisions += 1;
        decide(&self.online, state, p, rng)
    }

    /// `y = r` for terminal transitions, else `r + gamma_dq * max_a Q'(s', a)`.
    pub fn td_target(&self, t: &Transition) -> Result<f64> {
        if t.terminal {
            return Ok(t.reward);
        }
        let q = self.target.forward(&t.next_state)?;
        Ok(t.reward + self.cfg.gamma_dq * q[0].max(q[1]))
    }

    /// `sum_j (y_j - Q(s_j, a_j))^2` and its gradient in the online
    /// parameters, with targets from the frozen network.
    pub fn loss_and_gradient(&self, batch: &[&Transition]) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.online.params().len()];
        let mut loss = 0.0;
        for t in batch {
            let y = self.td_target(t)?;
            let q = self.online.forward(&t.state)?[t.action.index()];
            let err = y - q;
            loss += err * err;
            self.online.accumulate_grad(&t.state, t.action, -2.0 * err, &mut grad);
        }
        Ok((loss, grad))
    }

    /// Stores the transition, takes one Adam step on a replayed mini-batch
    /// and refreshes the target network every `sync_period` steps. Returns
    /// the mini-batch loss before the step.
    pub fn record_and_train(&mut self, transition: Transition, rng: &mut RngStream) -> Result<f64> {
        check_dim(self.online.input_dim(), transition.state.len())?;
        if !transition.terminal {
            check_dim(self.online.input_dim(), transition.next_state.len())?;
        }
        self.memory.push(transition);
        let batch = self.memory.sample(self.cfg.minibatch, rng);
        let (loss, grad) = self.loss_and_gradient(&batch)?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::invalid("non-finite controller gradient"));
        }
        self.adam.step(self.online.params_mut(), &grad);
        self.train_steps += 1;
        if self.cfg.sync_period > 0 && self.train_steps % self.cfg.sync_period == 0 {
            self.target = self.online.clone();
        }
        Ok(loss)
    }
}

fn decide(net: &QNetwork, state: &[f64], p: f64, rng: &mut RngStream) -> Result<Decision> {
    let q = net.forward(state)?;
    let explored = rng.uniform() < p;
    let action = if explored {
        Action::from_index(rng.below(2))
    } else if q[1] > q[0] {
        Action::Global
    } else {
        Action::Local
    };
    Ok(Decision {
        action,
        q,
        p_explr: p,
        explored,
    })
}

/// ε-greedy choice against an arbitrary network and exploration level.
pub fn select_action(net: &QNetwork, state: &[f64], p_explr: f64, rng: &mut RngStream) -> Result<Decision> {
    decide(net, state, p_explr, rng)
}
