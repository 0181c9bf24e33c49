//! One-axis sweeps over epsilon, batch size or node count, with median and
//! interquartile-range summaries.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Algorithm, ExperimentConfig};
use super::datasets::PreparedData;
use super::run::{metadata_header, run_experiment_with_data, ResultRow, RESULTS_HEADER};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Epsilon,
    Batch,
    Nodes,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "epsilon" | "eps" => Ok(SweepAxis::Epsilon),
            "batch" | "b" => Ok(SweepAxis::Batch),
            "nodes" | "m" => Ok(SweepAxis::Nodes),
            other => Err(Error::invalid(format!(
                "unknown sweep axis {other:?} (expected epsilon, batch or nodes)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Epsilon => "epsilon",
            SweepAxis::Batch => "batch",
            SweepAxis::Nodes => "nodes",
        }
    }
}

/// A result row tagged with its sweep value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub row: ResultRow,
}

/// Accuracy statistics of one (value, algorithm) group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepSummary {
    pub value: f64,
    pub algorithm: Algorithm,
    pub runs: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

impl SweepSummary {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

/// Linear-interpolation quantile of unsorted data; NaN when empty.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

fn apply(cfg: &ExperimentConfig, axis: SweepAxis, value: f64) -> Result<ExperimentConfig> {
    let mut c = cfg.clone();
    let as_count = |v: f64| -> Result<usize> {
        if v >= 1.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(Error::invalid(format!("{} value {v} must be a positive integer", axis.name())))
        }
    };
    match axis {
        SweepAxis::Epsilon => c.epsilons = vec![value],
        SweepAxis::Batch => c.batch_size = as_count(value)?,
        SweepAxis::Nodes => c.nodes = as_count(value)?,
    }
    c.validate()?;
    Ok(c)
}

/// Runs the config once per value. Rows come back in value order, then in
/// the order of [`super::run::cell_keys`].
pub fn sweep(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    axis: SweepAxis,
    values: &[f64],
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::invalid("sweep needs at least one value"));
    }
    let mut rows = Vec::new();
    for &v in values {
        let c = apply(cfg, axis, v)?;
        let out = run_experiment_with_data(&c, data)?;
        rows.extend(out.rows().into_iter().map(|row| SweepRow { value: v, row }));
    }
    Ok(rows)
}

/// Groups by (value, algorithm) in first-appearance order.
pub fn summarize(rows: &[SweepRow]) -> Vec<SweepSummary> {
    let mut keys: Vec<(f64, Algorithm)> = Vec::new();
    for r in rows {
        let k = (r.value, r.row.algorithm);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(value, algorithm)| {
            let acc: Vec<f64> = rows
                .iter()
                .filter(|r| r.value == value && r.row.algorithm == algorithm)
                .map(|r| r.row.accuracy)
                .collect();
            SweepSummary {
                value,
                algorithm,
                runs: acc.len(),
                median: median(&acc),
                q1: quantile(&acc, 0.25),
                q3: quantile(&acc, 0.75),
            }
        })
        .collect()
}

/// Writes `sweep.csv` (long format) and `sweep_summary.csv`.
pub fn write_sweep(
    cfg: &ExperimentConfig,
    axis: SweepAxis,
    rows: &[SweepRow],
    dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let header = format!("{}# sweep_axis={}\n", metadata_header(cfg), axis.name());
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("sweep.csv"))?);
    f.write_all(header.as_bytes())?;
    writeln!(f, "axis,value,{RESULTS_HEADER}")?;
    for r in rows {
        writeln!(f, "{},{},{}", axis.name(), r.value, r.row.csv_line(true))?;
    }
    f.flush()?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("sweep_summary.csv"))?);
    f.write_all(header.as_bytes())?;
    writeln!(f, "axis,value,algorithm,runs,median_accuracy,q1,q3,iqr")?;
    for s in summarize(rows) {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{}",
            axis.name(),
            s.value,
            s.algorithm.name(),
            s.runs,
            s.median,
            s.q1,
            s.q3,
            s.iqr()
        )?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        let v = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(median(&v), 3.0);
        assert_eq!(quantile(&v, 0.25), 2.0);
        assert_eq!(quantile(&v, 0.75), 4.0);
        assert_eq!(median(&[1.0, 2.0]), 1.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn axis_values_must_fit() {
        let c = ExperimentConfig::default();
        assert!(apply(&c, SweepAxis::Batch, 2.5).is_err());
        assert!(apply(&c, SweepAxis::Nodes, 0.0).is_err());
        assert_eq!(apply(&c, SweepAxis::Nodes, 3.0).unwrap().nodes, 3);
        assert_eq!(apply(&c, SweepAxis::Epsilon, 0.2).unwrap().epsilons, vec![0.2]);
        assert!(SweepAxis::parse("widgets").is_err());
    }
}
