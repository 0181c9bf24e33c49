//! Closed-form convergence guarantees, evaluated term by term.
//!
//! * [`bound_convex_collaborative`]: constant step `eta`, bounds
//!   `E[(1/T) sum_t F(w_t)] - F(w*)` for fully collaborative training.
//! * [`bound_strongly_convex_collaborative`]: step `2/(gamma t)`, same
//!   quantity.
//! * [`bound_convex_adaptive`]: adaptive training with constant step; the
//!   privacy term is scaled by the fraction of steps that were global.
//! * [`bound_strongly_convex_adaptive`]: order-of-magnitude rate for the
//!   summed squared distance of all models to `w*` under step
//!   `1/(a gamma t)`, with unit constants times a slack factor.
//!
//! Logarithms are natural.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::LossParams;
use crate::privacy::PrivacySpec;

/// `2 + 12 sqrt(2)`.
pub fn sampling_constant() -> f64 {
    2.0 + 12.0 * std::f64::consts::SQRT_2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Diameter of the hypothesis space.
    pub radius: f64,
    /// Lipschitz constant `L`.
    pub lipschitz: f64,
    /// Bound `B` on every per-sample gradient norm.
    pub grad_bound: f64,
    pub gamma: f64,
    pub batch: usize,
    /// Total training samples.
    pub n: usize,
    /// Iterations `T`.
    pub iterations: usize,
    pub eta: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub nodes: usize,
    /// Expected number of global commits over the run.
    pub global_updates: f64,
    /// Smallest action probability.
    pub a: f64,
    /// Multiplier on the order-of-magnitude rate.
    pub slack: f64,
}

impl BoundInputs {
    /// Inputs for the logistic loss with `B = L`.
    pub fn for_loss(
        params: &LossParams,
        spec: &PrivacySpec,
        batch: usize,
        n: usize,
        iterations: usize,
        eta: f64,
    ) -> Self {
        let c = params.constants();
        BoundInputs {
            radius: params.radius,
            lipschitz: c.l,
            grad_bound: c.l,
            gamma: c.gamma,
            batch,
            n,
            iterations,
            eta,
            epsilon: spec.epsilon,
            delta: spec.delta,
            nodes: 1,
            global_updates: iterations as f64,
            a: 0.1,
            slack: 1.0,
        }
    }

    fn check(&self, limit_nodes: usize) -> Result<()> {
        if self.batch == 0 || self.iterations == 0 || self.n == 0 {
            return Err(Error::invalid("bound needs b, T and n >= 1"));
        }
        if self.batch * self.iterations * limit_nodes > self.n {
            return Err(Error::Precondition(format!(
                "T = {} iterations of batch {} exceed a single pass over n = {} samples",
                self.iterations, self.batch, self.n
            )));
        }
        if !(self.epsilon > 0.0 && self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid("bound needs epsilon > 0 and delta in (0, 1)"));
        }
        Ok(())
    }

    fn log_term(&self) -> f64 {
        (1.25 / self.delta).ln()
    }

    /// `(2 (2+12 sqrt 2) R L / 3) [sqrt(bT)/n + 2/(sqrt n + sqrt(n - bT))]`.
    fn transductive(&self) -> f64 {
        let (b, t, n) = (self.batch as f64, self.iterations as f64, self.n as f64);
        2.0 * sampling_constant() * self.radius * self.lipschitz / 3.0
            * ((b * t).sqrt() / n + 2.0 / (n.sqrt() + (n - b * t).sqrt()))
    }
}

/// Individual terms of a bound; [`BoundTerms::total`] is their sum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct BoundTerms {
    pub optimization: f64,
    pub gradient: f64,
    pub privacy: f64,
    pub sampling: f64,
}

impl BoundTerms {
    pub fn total(&self) -> f64 {
        self.optimization + self.gradient + self.privacy + self.sampling
    }
}

/// `R^2/(2 eta T) + B^2 eta/2 + 4 ln(1.25/delta) eta L^2/(eps^2 b^2) + transductive`.
pub fn bound_convex_collaborative(x: &BoundInputs) -> Result<BoundTerms> {
    x.check(1)?;
    let (b, t) = (x.batch as f64, x.iterations as f64);
    Ok(BoundTerms {
        optimization: x.radius * x.radius / (2.0 * x.eta * t),
        gradient: x.grad_bound * x.grad_bound * x.eta / 2.0,
        privacy: 4.0 * x.log_term() * x.eta * x.lipschitz.powi(2) / (x.epsilon.powi(2) * b * b),
        sampling: x.transductive(),
    })
}

/// `2 (2+12 sqrt 2)^2 B^2/(gamma T) [3/(2b) + 4/n + (1/b + 2/n) ln(n/(n - b(T-1)))]
///  + 2 B^2 (ln T + 1)/(gamma T) + 8 ln(1.25/delta) L^2 (ln T + 1)/(b^2 eps^2 gamma T)`.
pub fn bound_strongly_convex_collaborative(x: &BoundInputs) -> Result<BoundTerms> {
    x.check(1)?;
    if !(x.gamma > 0.0) {
        return Err(Error::invalid("strongly convex bound needs gamma > 0"));
    }
    let (b, t, n) = (x.batch as f64, x.iterations as f64, x.n as f64);
    let b2 = x.grad_bound * x.grad_bound;
    let gt = x.gamma * t;
    let log_t = t.ln() + 1.0;
    Ok(BoundTerms {
        optimization: 0.0,
        sampling: 2.0 * sampling_constant().powi(2) * b2 / gt
            * (1.5 / b + 4.0 / n + (1.0 / b + 2.0 / n) * (n / (n - b * (t - 1.0))).ln()),
        gradient: 2.0 * b2 * log_t / gt,
        privacy: 8.0 * x.log_term() * x.lipschitz.powi(2) * log_t / (b * b * x.epsilon.powi(2) * gt),
    })
}

/// `(M+1) R^2/(4 T eta) + eta B^2 + (4 ln(1.25/delta) eta L^2/(b^2 eps^2)) (G/T) + transductive`
/// where `G` is the expected number of global commits.
pub fn bound_convex_adaptive(x: &BoundInputs) -> Result<BoundTerms> {
    x.check(1)?;
    let (b, t, m) = (x.batch as f64, x.iterations as f64, x.nodes as f64);
    Ok(BoundTerms {
        optimization: (m + 1.0) * x.radius * x.radius / (4.0 * t * x.eta),
        gradient: x.eta * x.grad_bound * x.grad_bound,
        privacy: 4.0 * x.log_term() * x.eta * x.lipschitz.powi(2) / (b * b * x.epsilon.powi(2))
            * (x.global_updates / t),
        sampling: x.transductive(),
    })
}

/// `slack (M B^2/(a^2 t) + M B^2 ln t/(a^2 b t) + M L^2 ln(1.25/delta)/(a^2 b^2 eps^2 t))`
/// at round `t`, for `1 <= t <= T <= n/(b M)`.
pub fn bound_strongly_convex_adaptive(x: &BoundInputs, t: usize) -> Result<BoundTerms> {
    x.check(x.nodes.max(1))?;
    if t == 0 || t > x.iterations {
        return Err(Error::invalid(format!("round {t} outside 1..={}", x.iterations)));
    }
    if !(x.a > 0.0 && x.a < 1.0) {
        return Err(Error::invalid("action probability floor a must lie in (0, 1)"));
    }
    let (b, tf, m) = (x.batch as f64, t as f64, x.nodes as f64);
    let scale = x.slack * m / (x.a * x.a * tf);
    let b2 = x.grad_bound * x.grad_bound;
    Ok(BoundTerms {
        optimization: 0.0,
        gradient: scale * b2,
        sampling: scale * b2 * tf.ln() / b,
        privacy: scale * x.lipschitz.powi(2) * x.log_term() / (b * b * x.epsilon.powi(2)),
    })
}
