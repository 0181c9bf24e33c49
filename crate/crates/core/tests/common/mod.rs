#![allow(dead_code)]

use std::sync::Arc;

use dpsgd::data::{BinaryTask, NodePartition};
use dpsgd::linalg::{Matrix, RngStream};

/// `n` rows in `[-1, 1]^dim` scaled into the unit ball, labels `+-1`.
pub fn random_task(dim: usize, n: usize, seed: u64) -> BinaryTask {
    let mut rng = RngStream::new(seed);
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..dim).map(|_| 2.0 * rng.uniform() - 1.0).collect();
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = rng.uniform() / norm.max(1e-12);
        data.extend(row.iter().map(|v| v * scale));
        labels.push(if rng.uniform() < 0.5 { 1.0 } else { -1.0 });
    }
    let m = Matrix::from_vec(n, dim, data).unwrap();
    BinaryTask::new(Arc::new(m), labels, 0).unwrap()
}

/// Numerically stable `1 / (1 + exp(m))`.
pub fn sigmoid_neg(m: f64) -> f64 {
    if m > 0.0 {
        let e = (-m).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + m.exp())
    }
}

/// Sequential dot product.
pub fn naive_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Mean of per-sample gradients, written out directly.
pub fn naive_batch_grad(w: &[f64], task: &BinaryTask, batch: &[usize], lambda: f64) -> Vec<f64> {
    let mut g = vec![0.0; w.len()];
    for &i in batch {
        let x = task.features().row(i);
        let y = task.labels()[i];
        let c = -y * sigmoid_neg(y * naive_dot(w, x));
        for j in 0..w.len() {
            g[j] += c * x[j] + lambda * w[j];
        }
    }
    for v in &mut g {
        *v /= batch.len() as f64;
    }
    g
}

/// Scales `w` by `r / ||w||` when outside the ball of radius `r`, then
/// shrinks by one ulp-sized factor while rounding leaves it outside.
pub fn naive_project(w: &mut [f64], r: f64) {
    let n = naive_dot(w, w).sqrt();
    if n <= r {
        return;
    }
    let mut s = r / n;
    loop {
        for v in w.iter_mut() {
            *v *= s;
        }
        if naive_dot(w, w).sqrt() <= r {
            return;
        }
        s = 1.0 - f64::EPSILON;
    }
}

/// Plain projected mini-batch SGD, one pass, nodes visited round-robin
/// (skipping exhausted ones), each node's data shuffled once by its own
/// `"cursor"` stream.
pub fn oracle_round_robin_sgd(
    task: &BinaryTask,
    part: &NodePartition,
    b: usize,
    eta: f64,
    lambda: f64,
    radius: f64,
    seed: u64,
) -> Vec<f64> {
    let m = part.nodes.len();
    let orders: Vec<Vec<usize>> = part
        .nodes
        .iter()
        .enumerate()
        .map(|(k, idx)| {
            let mut o = idx.clone();
            RngStream::derive(seed, "cursor", k as u64).shuffle(&mut o);
            o
        })
        .collect();
    let mut pos = vec![0usize; m];
    let mut w = vec![0.0; task.dim()];
    let mut t = 1usize;
    loop {
        let start = (t - 1) % m;
        let Some(node) = (0..m).map(|k| (start + k) % m).find(|&k| pos[k] < orders[k].len()) else {
            break;
        };
        let end = (pos[node] + b).min(orders[node].len());
        let batch = &orders[node][pos[node]..end];
        pos[node] = end;
        let g = naive_batch_grad(&w, task, batch, lambda);
        for j in 0..w.len() {
            w[j] -= eta * g[j];
        }
        naive_project(&mut w, radius);
        t += 1;
    }
    w
}
