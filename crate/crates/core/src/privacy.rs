//! Gaussian-mechanism calibration, L2 sensitivities of the update rules, and
//! a per-sample use ledger.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

/// An `(epsilon, delta)` target with `0 < epsilon < 1` and `0 < delta < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacySpec {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacySpec {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::Precondition(format!(
                "epsilon must lie in (0, 1) for the Gaussian mechanism, got {epsilon}"
            )));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Precondition(format!(
                "delta must lie in (0, 1), got {delta}"
            )));
        }
        Ok(PrivacySpec { epsilon, delta })
    }

    /// Splits the budget evenly over `k` uses of each sample.
    pub fn split(&self, k: u32) -> Self {
        PrivacySpec {
            epsilon: self.epsilon / f64::from(k),
            delta: self.delta / f64::from(k),
        }
    }

    /// `sqrt(2 ln(1.25 / delta))`.
    pub fn noise_multiplier(&self) -> f64 {
        (2.0 * (1.25 / self.delta).ln()).sqrt()
    }
}

/// Largest epsilon accepted where a run asks for 1.0.
pub const EPSILON_ONE: f64 = 0.999;

/// Maps requests of `epsilon >= 1` onto [`EPSILON_ONE`]; other values pass
/// through unchanged.
pub fn clamp_epsilon(epsilon: f64) -> f64 {
    if epsilon >= 1.0 {
        log::info!("epsilon {epsilon} mapped to {EPSILON_ONE}");
        EPSILON_ONE
    } else {
        epsilon
    }
}

/// `1 / n^2`.
pub fn delta_for(n: usize) -> f64 {
    let n = n as f64;
    1.0 / (n * n)
}

/// Sensitivity of one noisy gradient step on a batch of `b` samples:
/// neighbouring batches move the iterate by at most `2 eta L / b`.
pub fn sensitivity_step(eta: f64, l: f64, b: usize) -> f64 {
    2.0 * eta * l / b as f64
}

/// Sensitivity of a global commit preceded by local steps: the largest
/// `2 eta_k L / b_k` over the `(eta, batch size)` pairs since the node last
/// committed, current step included. Every `eta` must satisfy
/// `eta <= 1 / (2 mu)`.
pub fn sensitivity_window(entries: &[(f64, usize)], l: f64, mu: f64) -> Result<f64> {
    if entries.is_empty() {
        return Err(Error::invalid("sensitivity of an empty step window"));
    }
    let cap = 1.0 / (2.0 * mu);
    let mut worst: f64 = 0.0;
    for &(eta, b) in entries {
        if eta > cap {
            return Err(Error::Precondition(format!(
                "step size {eta} exceeds 1/(2 mu) = {cap}; windowed sensitivity bound does not apply"
            )));
        }
        worst = worst.max(sensitivity_step(eta, l, b));
    }
    Ok(worst)
}

/// `sqrt(2 ln(1.25/delta)) * delta2 / epsilon`: the standard deviation of
/// the noise term added to the iterate.
pub fn noise_sigma(spec: &PrivacySpec, delta2: f64) -> f64 {
    spec.noise_multiplier() * delta2 / spec.epsilon
}

/// How the calibrated `sigma` is spread over the `d` coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseNormMode {
    /// Each coordinate gets standard deviation `sigma`.
    #[default]
    PerCoordinate,
    /// The whole vector has expected squared norm `sigma^2`, i.e. each
    /// coordinate gets `sigma / sqrt(d)`.
    TotalNorm,
}

impl NoiseNormMode {
    pub fn coordinate_sigma(self, sigma: f64, dim: usize) -> f64 {
        match self {
            NoiseNormMode::PerCoordinate => sigma,
            NoiseNormMode::TotalNorm => sigma / (dim.max(1) as f64).sqrt(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "per_coordinate" => Ok(NoiseNormMode::PerCoordinate),
            "total_norm" => Ok(NoiseNormMode::TotalNorm),
            _ => Err(Error::invalid(format!(
                "noise_norm_mode must be per_coordinate or total_norm, got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u64,
    pub epsilon: f64,
    pub delta: f64,
    pub sigma: f64,
}

/// Counts how often each sample id fed a gradient, and which privacy
/// parameters each noisy step used.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyLedger {
    counts: BTreeMap<usize, u32>,
    limit: u32,
    steps: Vec<StepRecord>,
}

impl Default for PrivacyLedger {
    fn default() -> Self {
        PrivacyLedger::new(1)
    }
}

impl PrivacyLedger {
    /// A ledger allowing each sample at most `limit` uses.
    pub fn new(limit: u32) -> Self {
        PrivacyLedger {
            counts: BTreeMap::new(),
            limit,
            steps: Vec::new(),
        }
    }

    pub fn limit(&self) -> u32 {
        self.limit
    }

    /// Counts one use of every sample in `batch`. Nothing is recorded when
    /// any sample would exceed the limit.
    pub fn record(&mut self, batch: &[usize]) -> Result<()> {
        for (k, &s) in batch.iter().enumerate() {
            let prior = self.counts.get(&s).copied().unwrap_or(0);
            let repeats = batch[..k].iter().filter(|&&o| o == s).count() as u32;
            let count = prior + repeats + 1;
            if count > self.limit {
                return Err(Error::PrivacyViolation {
                    sample: s,
                    count,
                    limit: self.limit,
                });
            }
        }
        for &s in batch {
            *self.counts.entry(s).or_insert(0) += 1;
        }
        Ok(())
    }

    pub fn record_step(&mut self, t: u64, spec: Option<&PrivacySpec>, sigma: f64) {
        let (epsilon, delta) = spec.map_or((f64::INFINITY, 0.0), |s| (s.epsilon, s.delta));
        self.steps.push(StepRecord {
            t,
            epsilon,
            delta,
            sigma,
        });
    }

    pub fn count(&self, sample: usize) -> u32 {
        self.counts.get(&sample).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &BTreeMap<usize, u32> {
        &self.counts
    }

    pub fn steps(&self) -> &[StepRecord] {
        &self.steps
    }

    pub fn samples_used(&self) -> usize {
        self.counts.len()
    }

    pub fn max_count(&self) -> u32 {
        self.counts.values().copied().max().unwrap_or(0)
    }

    /// True when every id in `samples` was used exactly `times` times and no
    /// other id appears.
    pub fn all_used_exactly(&self, samples: &[usize], times: u32) -> bool {
        self.counts.len() == samples.len() && samples.iter().all(|&s| self.count(s) == times)
    }

    /// Re-validates the limit over all counters.
    pub fn audit(&self) -> Result<AuditSummary> {
        if let Some((&sample, &count)) = self.counts.iter().find(|(_, &c)| c > self.limit) {
            return Err(Error::PrivacyViolation {
                sample,
                count,
                limit: self.limit,
            });
        }
        Ok(AuditSummary {
            samples: self.counts.len(),
            min_count: self.counts.values().copied().min().unwrap_or(0),
            max_count: self.max_count(),
            limit: self.limit,
            steps: self.steps.len(),
        })
    }

    /// `{"<sample id>": count, ..., "limit": k, "step_records": [[t, eps, delta, sigma], ...]}`.
    /// Infinite epsilon (noiseless steps) is written as `null`.
    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        for (s, c) in &self.counts {
            m.insert(s.to_string(), json!(c));
        }
        m.insert("limit".into(), json!(self.limit));
        let steps: Vec<Value> = self
            .steps
            .iter()
            .map(|r| {
                let eps = if r.epsilon.is_finite() { json!(r.epsilon) } else { Value::Null };
                json!([r.t, eps, r.delta, r.sigma])
            })
            .collect();
        m.insert("step_records".into(), Value::Array(steps));
        Value::Object(m)
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let bad = |msg: &str| Error::invalid(format!("ledger JSON: {msg}"));
        let obj = v.as_object().ok_or_else(|| bad("expected an object"))?;
        let mut ledger = PrivacyLedger::new(1);
        for (k, val) in obj {
            match k.as_str() {
                "limit" => {
                    ledger.limit = val
                        .as_u64()
                        .and_then(|l| u32::try_from(l).ok())
                        .ok_or_else(|| bad("limit must be a small integer"))?;
                }
                "step_records" => {
                    let arr = val.as_array().ok_or_else(|| bad("step_records must be an array"))?;
                    for rec in arr {
                        let r = rec
                            .as_array()
                            .filter(|r| r.len() == 4)
                            .ok_or_else(|| bad("step record must have 4 entries"))?;
                        ledger.steps.push(StepRecord {
                            t: r[0].as_u64().ok_or_else(|| bad("step index"))?,
                            epsilon: r[1].as_f64().unwrap_or(f64::INFINITY),
                            delta: r[2].as_f64().ok_or_else(|| bad("delta"))?,
                            sigma: r[3].as_f64().ok_or_else(|| bad("sigma"))?,
                        });
                    }
                }
                id => {
                    let sample: usize = id.parse().map_err(|_| bad("non-numeric sample id"))?;
                    let count = val
                        .as_u64()
                        .and_then(|c| u32::try_from(c).ok())
                        .ok_or_else(|| bad("use count must be an integer"))?;
                    ledger.counts.insert(sample, count);
                }
            }
        }
        Ok(ledger)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(&self.to_json())?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AuditSummary {
    pub samples: usize,
    pub min_count: u32,
    pub max_count: u32,
    pub limit: u32,
    pub steps: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_sensitivity() {
        assert!((sensitivity_step(0.1, 1.0, 50) - 0.004).abs() < 1e-18);
        assert_eq!(sensitivity_step(0.1, 1.0, 100) * 2.0, sensitivity_step(0.1, 1.0, 50));
    }

    #[test]
    fn window_sensitivity() {
        let s = sensitivity_window(&[(0.1, 50), (0.05, 50)], 1.0, 1.0).unwrap();
        assert!((s - 0.004).abs() < 1e-18);
        assert_eq!(
            sensitivity_window(&[(0.1, 50)], 1.0, 1.0).unwrap(),
            sensitivity_step(0.1, 1.0, 50)
        );
        let e = sensitivity_window(&[(0.1, 50), (0.6, 50)], 1.0, 1.0).unwrap_err();
        assert!(matches!(e, Error::Precondition(_)));
        assert!(sensitivity_window(&[], 1.0, 1.0).is_err());
    }

    #[test]
    fn sigma_scaling() {
        let spec = PrivacySpec::new(0.5, 1e-6).unwrap();
        assert_eq!(noise_sigma(&spec, 0.0), 0.0);
        let half = PrivacySpec::new(0.25, 1e-6).unwrap();
        assert!((noise_sigma(&half, 0.004) - 2.0 * noise_sigma(&spec, 0.004)).abs() < 1e-15);
        assert!(PrivacySpec::new(1.0, 1e-6).is_err());
        assert!(PrivacySpec::new(0.5, 0.0).is_err());
        assert_eq!(clamp_epsilon(1.0), EPSILON_ONE);
        assert_eq!(clamp_epsilon(0.3), 0.3);
    }

    #[test]
    fn ledger_detects_reuse() {
        let mut l = PrivacyLedger::new(1);
        l.record(&[1, 2]).unwrap();
        assert_eq!((l.count(1), l.count(2)), (1, 1));
        let e = l.record(&[3, 2]).unwrap_err();
        assert!(matches!(e, Error::PrivacyViolation { sample: 2, count: 2, limit: 1 }));
        assert_eq!(l.count(3), 0);
        assert!(l.record(&[4, 4]).is_err());
        assert!(l.all_used_exactly(&[1, 2], 1));
    }

    #[test]
    fn ledger_json_round_trip() {
        let mut l = PrivacyLedger::new(5);
        l.record(&[7, 8]).unwrap();
        l.record(&[7]).unwrap();
        let spec = PrivacySpec::new(0.5, 1e-6).unwrap();
        l.record_step(1, Some(&spec), 0.02);
        l.record_step(2, None, 0.0);
        let back = PrivacyLedger::from_json(&l.to_json()).unwrap();
        assert_eq!(back, l);
        let summary = back.audit().unwrap();
        assert_eq!((summary.samples, summary.max_count, summary.steps), (2, 2, 2));
    }
}
