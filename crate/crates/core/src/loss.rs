//! L2-regularized logistic loss `ln(1 + exp(-y<w,x>)) + (lambda/2)||w||^2`.

use serde::{Deserialize, Serialize};

use crate::data::BinaryTask;
use crate::error::{Error, Result};
use crate::linalg::DenseVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParams {
    pub lambda: f64,
    /// Radius of the hypothesis ball every iterate is projected onto.
    pub radius: f64,
}

/// Lipschitz constant `l`, smoothness `mu`, strong convexity `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossConstants {
    pub l: f64,
    pub mu: f64,
    pub gamma: f64,
}

impl LossParams {
    pub fn new(lambda: f64, radius: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
        }
        if !(radius > 0.0) {
            return Err(Error::invalid(format!("radius must be > 0, got {radius}")));
        }
        Ok(LossParams { lambda, radius })
    }

    /// `(1 + lambda R, 1 + lambda, lambda)`, valid for `||x|| <= 1`, `||w|| <= R`.
    pub fn constants(&self) -> LossConstants {
        LossConstants {
            l: 1.0 + self.lambda * self.radius,
            mu: 1.0 + self.lambda,
            gamma: self.lambda,
        }
    }
}

/// One feature vector with its `+1 / -1` label.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub x: &'a [f64],
    pub y: f64,
}

/// Plain left-to-right inner product. The per-step update is kept in this
/// simple summation order so independent re-implementations agree to the bit.
#[inline]
fn margin_dot(w: &[f64], x: &[f64]) -> f64 {
    let mut s = 0.0;
    for (a, b) in w.iter().zip(x) {
        s += a * b;
    }
    s
}

/// `ln(1 + exp(-m))` without overflow.
#[inline]
pub fn log1p_exp_neg(m: f64) -> f64 {
    if m > 0.0 {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

/// `1 / (1 + exp(m))` without overflow.
#[inline]
fn logistic_weight(m: f64) -> f64 {
    if m > 0.0 {
        let e = (-m).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + m.exp())
    }
}

pub fn loss(w: &[f64], s: Sample<'_>, p: &LossParams) -> f64 {
    debug_assert_eq!(w.len(), s.x.len());
    let m = s.y * margin_dot(w, s.x);
    let reg = if p.lambda == 0.0 {
        0.0
    } else {
        0.5 * p.lambda * margin_dot(w, w)
    };
    log1p_exp_neg(m) + reg
}

/// Adds `grad f(w, s)` into `out`.
pub fn add_grad(w: &[f64], s: Sample<'_>, p: &LossParams, out: &mut [f64]) {
    let m = s.y * margin_dot(w, s.x);
    let c = -s.y * logistic_weight(m);
    for ((o, xi), wi) in out.iter_mut().zip(s.x).zip(w) {
        *o += c * xi + p.lambda * wi;
    }
}

pub fn grad(w: &[f64], s: Sample<'_>, p: &LossParams) -> DenseVector {
    let mut out = vec![0.0; w.len()];
    add_grad(w, s, p, &mut out);
    DenseVector::from_vec(out)
}

/// Mean gradient over the samples `batch` of `task`, divided by the actual
/// batch size.
pub fn batch_grad(
    w: &[f64],
    task: &BinaryTask,
    batch: &[usize],
    p: &LossParams,
) -> Result<DenseVector> {
    if batch.is_empty() {
        return Err(Error::invalid("empty mini-batch"));
    }
    crate::error::check_dim(task.dim(), w.len())?;
    let mut acc = vec![0.0; w.len()];
    for &i in batch {
        add_grad(w, task.sample(i), p, &mut acc);
    }
    let b = batch.len() as f64;
    acc.iter_mut().for_each(|v| *v /= b);
    Ok(DenseVector::from_vec(acc))
}

/// Mean loss over the samples `batch` of `task` (0 for an empty batch).
pub fn batch_loss(w: &[f64], task: &BinaryTask, batch: &[usize], p: &LossParams) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let total: f64 = batch.iter().map(|&i| loss(w, task.sample(i), p)).sum();
    total / batch.len() as f64
}

/// `F(w)`: mean loss over every sample of the task.
pub fn empirical_risk(w: &[f64], task: &BinaryTask, p: &LossParams) -> Result<f64> {
    if task.is_empty() {
        return Err(Error::invalid("empirical risk of an empty task"));
    }
    crate::error::check_dim(task.dim(), w.len())?;
    let total: f64 = (0..task.len()).map(|i| loss(w, task.sample(i), p)).sum();
    Ok(total / task.len() as f64)
}

/// Risk restricted to a subset of sample indices.
pub fn subset_risk(w: &[f64], task: &BinaryTask, idx: &[usize], p: &LossParams) -> Result<f64> {
    if idx.is_empty() {
        return Err(Error::invalid("risk over an empty index set"));
    }
    crate::error::check_dim(task.dim(), w.len())?;
    Ok(batch_loss(w, task, idx, p))
}

/// Full-batch projected gradient descent on `idx`, used as a reference
/// minimizer. Step `1/mu` is safe for this smooth loss.
pub fn minimize_risk(
    task: &BinaryTask,
    idx: &[usize],
    p: &LossParams,
    iterations: usize,
) -> Result<DenseVector> {
    let eta = 1.0 / p.constants().mu;
    let mut w = vec![0.0; task.dim()];
    for _ in 0..iterations {
        let g = batch_grad(&w, task, idx, p)?;
        for (wi, gi) in w.iter_mut().zip(g.as_slice()) {
            *wi -= eta * gi;
        }
        crate::linalg::project_in_place(&mut w, p.radius);
    }
    Ok(DenseVector::from_vec(w))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(lambda: f64, radius: f64) -> LossParams {
        LossParams::new(lambda, radius).unwrap()
    }

    #[test]
    fn zero_model_loss_is_ln2() {
        let x = [0.6, 0.8];
        let l = loss(&[0.0, 0.0], Sample { x: &x, y: -1.0 }, &p(0.0, 1.0));
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn saturated_margin_does_not_overflow() {
        let x = [1.0];
        let l = loss(&[50.0], Sample { x: &x, y: 1.0 }, &p(0.0, 100.0));
        assert!((0.0..=2e-22).contains(&l));
        let l = loss(&[-800.0], Sample { x: &x, y: 1.0 }, &p(0.0, 1000.0));
        assert!((l - 800.0).abs() < 1e-9);
        let g = grad(&[1000.0], Sample { x: &x, y: 1.0 }, &p(0.0, 2000.0));
        assert!(g.norm() <= 1e-20);
    }

    #[test]
    fn gradient_at_origin() {
        let x = [1.0, 0.0];
        let g = grad(&[0.0, 0.0], Sample { x: &x, y: 1.0 }, &p(0.0, 1.0));
        assert_eq!(g.as_slice(), &[-0.5, 0.0]);
    }

    #[test]
    fn constants_match_closed_form() {
        let c = p(0.0, 5.0).constants();
        assert_eq!((c.l, c.mu, c.gamma), (1.0, 1.0, 0.0));
        let c = p(1e-4, 1e4).constants();
        assert!((c.l - 2.0).abs() < 1e-12 && (c.mu - 1.0001).abs() < 1e-15);
        assert_eq!(c.gamma, 1e-4);
        let c = p(0.5, 2.0).constants();
        assert_eq!((c.l, c.mu, c.gamma), (2.0, 1.5, 0.5));
    }

    #[test]
    fn rejects_bad_params() {
        assert!(LossParams::new(-1.0, 1.0).is_err());
        assert!(LossParams::new(0.0, 0.0).is_err());
    }
}
