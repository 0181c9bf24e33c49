//! Experiment configuration in a plain `key = value` format with `[section]`
//! headers. `#` and `;` start comments. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adaptive::SchedulerMode;
use crate::collaborative::NodeScheduler;
use crate::data::SyntheticConfig;
use crate::deep_q::ControllerConfig;
use crate::error::{Error, Result};
use crate::privacy::NoiseNormMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Mnist,
    Covertype,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Fully collaborative training without noise.
    Noiseless,
    /// Fully collaborative noisy training.
    Collaborative,
    /// Deep-Q controlled local/global training.
    Adaptive,
    /// Random-walk baseline with a budget split over several passes.
    Baseline,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Noiseless => "noiseless",
            Algorithm::Collaborative => "collaborative",
            Algorithm::Adaptive => "adaptive",
            Algorithm::Baseline => "baseline",
        }
    }

    pub fn is_private(self) -> bool {
        self != Algorithm::Noiseless
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convexity {
    /// `lambda = 0`.
    Convex,
    /// `lambda > 0`, radius `1/lambda` unless set.
    StronglyConvex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    /// `2/(gamma t)`.
    StronglyConvex,
    /// `1/(a gamma t)`.
    Scaled,
    /// `1/sqrt(t)`.
    InverseSqrt,
}

/// Which final model of an adaptive run is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptiveModel {
    Global,
    LocalMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DeltaRule {
    /// `1/n^2` with `n` the number of training samples used.
    InverseSquare,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    pub data_dir: PathBuf,
    /// PCA target dimension; `None` skips PCA.
    pub pca_dims: Option<usize>,
    pub synthetic: SyntheticConfig,
    pub synthetic_test_samples: usize,
    pub data_seed: u64,
    pub algorithms: Vec<Algorithm>,
    pub convexity: Convexity,
    pub nodes: usize,
    /// Samples per node; `None` splits the training pool evenly. When
    /// `nodes * per_node` exceeds the pool, each node draws from its own
    /// copy of it.
    pub per_node: Option<usize>,
    pub batch_size: usize,
    pub eta: f64,
    pub schedule: ScheduleKind,
    pub lambda: f64,
    /// Projection radius; `None` picks 50 (convex) or `1/lambda`.
    pub radius: Option<f64>,
    pub scheduler: NodeScheduler,
    pub mode: SchedulerMode,
    pub a: f64,
    pub adaptive_model: AdaptiveModel,
    pub epsilons: Vec<f64>,
    pub delta: DeltaRule,
    pub noise_norm_mode: NoiseNormMode,
    pub baseline_passes: u32,
    pub controller: ControllerConfig,
    /// `None` uses `per_node / (2 b)` decisions.
    pub anneal_steps: Option<u64>,
    pub min_action_probability: f64,
    pub seeds: Vec<u64>,
    pub threads: usize,
    pub out_dir: PathBuf,
    /// Also write each run's full per-sample ledger under `ledgers/`.
    pub write_ledgers: bool,
}

/// `$DPSGD_DATA_DIR`, else `./data`.
pub fn default_data_dir() -> PathBuf {
    std::env::var_os("DPSGD_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetKind::Mnist,
            data_dir: default_data_dir(),
            pca_dims: Some(50),
            synthetic: SyntheticConfig::default(),
            synthetic_test_samples: 1000,
            data_seed: 0,
            algorithms: vec![Algorithm::Noiseless, Algorithm::Collaborative, Algorithm::Adaptive],
            convexity: Convexity::Convex,
            nodes: 10,
            per_node: None,
            batch_size: 50,
            eta: 0.1,
            schedule: ScheduleKind::Constant,
            lambda: 1e-4,
            radius: None,
            scheduler: NodeScheduler::RoundRobin,
            mode: SchedulerMode::Sequential,
            a: 0.1,
            adaptive_model: AdaptiveModel::Global,
            epsilons: vec![crate::privacy::EPSILON_ONE],
            delta: DeltaRule::InverseSquare,
            noise_norm_mode: NoiseNormMode::PerCoordinate,
            baseline_passes: 5,
            controller: ControllerConfig::default(),
            anneal_steps: None,
            min_action_probability: 0.0,
            seeds: vec![1, 2, 3, 4, 5],
            threads: 0,
            out_dir: PathBuf::from("results"),
            write_ledgers: false,
        }
    }
}

struct Entry {
    value: String,
    line: usize,
}

fn cfg_err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

fn parse_num<T: std::str::FromStr>(e: &Entry, key: &str) -> Result<T> {
    e.value
        .parse()
        .map_err(|_| cfg_err(e.line, format!("{key}: cannot parse {:?}", e.value)))
}

fn parse_list<T: std::str::FromStr>(e: &Entry, key: &str) -> Result<Vec<T>> {
    let items: Result<Vec<T>> = e
        .value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| cfg_err(e.line, format!("{key}: cannot parse list item {s:?}")))
        })
        .collect();
    let items = items?;
    if items.is_empty() {
        return Err(cfg_err(e.line, format!("{key}: empty list")));
    }
    Ok(items)
}

fn parse_enum<T: serde::de::DeserializeOwned>(e: &Entry, key: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(e.value.clone()))
        .map_err(|_| cfg_err(e.line, format!("{key}: unknown value {:?}", e.value)))
}

/// Parses a comma-separated seed list, accepting `a..b` inclusive ranges.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let (a, b): (u64, u64) = (
                a.trim().parse().map_err(|_| Error::invalid(format!("bad seed range {part:?}")))?,
                b.trim().parse().map_err(|_| Error::invalid(format!("bad seed range {part:?}")))?,
            );
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| Error::invalid(format!("bad seed {part:?}")))?);
        }
    }
    if out.is_empty() {
        return Err(Error::invalid("empty seed list"));
    }
    Ok(out)
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        ExperimentConfig::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split(['#', ';']).next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| cfg_err(line, "unterminated section header"))?;
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = content
                .split_once('=')
                .ok_or_else(|| cfg_err(line, format!("expected key = value, got {content:?}")))?;
            let key = if section.is_empty() {
                k.trim().to_string()
            } else {
                format!("{section}.{}", k.trim())
            };
            let entry = Entry {
                value: v.trim().to_string(),
                line,
            };
            if entries.insert(key.clone(), entry).is_some() {
                return Err(cfg_err(line, format!("duplicate key {key}")));
            }
        }

        let mut c = ExperimentConfig::default();
        let mut pca_set = false;
        for (key, e) in &entries {
            match key.as_str() {
                "data.dataset" => c.dataset = parse_enum(e, key)?,
                "data.data_dir" => c.data_dir = PathBuf::from(&e.value),
                "data.pca_dims" => {
                    pca_set = true;
                    c.pca_dims = if e.value == "none" { None } else { Some(parse_num(e, key)?) };
                }
                "data.per_node" => {
                    c.per_node = if e.value == "auto" { None } else { Some(parse_num(e, key)?) };
                }
                "data.seed" => c.data_seed = parse_num(e, key)?,
                "synthetic.classes" => c.synthetic.classes = parse_num(e, key)?,
                "synthetic.dim" => c.synthetic.dim = parse_num(e, key)?,
                "synthetic.separation" => c.synthetic.separation = parse_num(e, key)?,
                "synthetic.spread" => c.synthetic.spread = parse_num(e, key)?,
                "synthetic.train_samples" => c.synthetic.samples = parse_num(e, key)?,
                "synthetic.test_samples" => c.synthetic_test_samples = parse_num(e, key)?,
                "training.algorithms" => {
                    c.algorithms = e
                        .value
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| {
                            parse_enum(
                                &Entry {
                                    value: s.to_string(),
                                    line: e.line,
                                },
                                key,
                            )
                        })
                        .collect::<Result<_>>()?;
                    if c.algorithms.is_empty() {
                        return Err(cfg_err(e.line, "no algorithms listed"));
                    }
                }
                "training.convexity" => c.convexity = parse_enum(e, key)?,
                "training.nodes" => c.nodes = parse_num(e, key)?,
                "training.batch_size" => c.batch_size = parse_num(e, key)?,
                "training.eta" => c.eta = parse_num(e, key)?,
                "training.schedule" => c.schedule = parse_enum(e, key)?,
                "training.lambda" => c.lambda = parse_num(e, key)?,
                "training.radius" => {
                    c.radius = if e.value == "auto" { None } else { Some(parse_num(e, key)?) };
                }
                "training.scheduler" => c.scheduler = parse_enum(e, key)?,
                "training.mode" => c.mode = parse_enum(e, key)?,
                "training.a" => c.a = parse_num(e, key)?,
                "training.adaptive_model" => c.adaptive_model = parse_enum(e, key)?,
                "privacy.epsilon" => c.epsilons = parse_list(e, key)?,
                "privacy.delta" => {
                    c.delta = if e.value == "auto" {
                        DeltaRule::InverseSquare
                    } else {
                        DeltaRule::Fixed(parse_num(e, key)?)
                    };
                }
                "privacy.noise_norm_mode" => c.noise_norm_mode = NoiseNormMode::parse(&e.value)
                    .map_err(|err| cfg_err(e.line, err.to_string()))?,
                "privacy.baseline_passes" => c.baseline_passes = parse_num(e, key)?,
                "controller.hidden" => c.controller.hidden = parse_num(e, key)?,
                "controller.memory" => c.controller.memory_capacity = parse_num(e, key)?,
                "controller.minibatch" => c.controller.minibatch = parse_num(e, key)?,
                "controller.gamma_dq" => c.controller.gamma_dq = parse_num(e, key)?,
                "controller.sync_period" => c.controller.sync_period = parse_num(e, key)?,
                "controller.learning_rate" => c.controller.learning_rate = parse_num(e, key)?,
                "controller.anneal_steps" => {
                    c.anneal_steps = if e.value == "auto" { None } else { Some(parse_num(e, key)?) };
                }
                "controller.min_action_probability" => c.min_action_probability = parse_num(e, key)?,
                "run.seeds" => {
                    c.seeds = parse_seeds(&e.value).map_err(|err| cfg_err(e.line, err.to_string()))?;
                }
                "run.threads" => c.threads = parse_num(e, key)?,
                "run.out" => c.out_dir = PathBuf::from(&e.value),
                "run.write_ledgers" => c.write_ledgers = parse_num(e, key)?,
                _ => return Err(cfg_err(e.line, format!("unknown key {key}"))),
            }
        }
        if !pca_set && c.dataset != DatasetKind::Mnist {
            c.pca_dims = None;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.nodes == 0 || self.batch_size == 0 {
            return bad("nodes and batch_size must be >= 1".into());
        }
        if self.algorithms.is_empty() || self.seeds.is_empty() || self.epsilons.is_empty() {
            return bad("algorithms, seeds and epsilon lists must be nonempty".into());
        }
        if self.epsilons.iter().any(|&e| !(e > 0.0)) {
            return bad("epsilon values must be > 0".into());
        }
        if let DeltaRule::Fixed(d) = self.delta {
            if !(d > 0.0 && d < 1.0) {
                return bad(format!("delta {d} must lie in (0, 1)"));
            }
        }
        if self.convexity == Convexity::StronglyConvex && !(self.lambda > 0.0) {
            return bad("strongly convex runs need lambda > 0".into());
        }
        if !(self.eta > 0.0) {
            return bad("eta must be > 0".into());
        }
        Ok(())
    }

    /// Regularization actually applied.
    pub fn effective_lambda(&self) -> f64 {
        match self.convexity {
            Convexity::Convex => 0.0,
            Convexity::StronglyConvex => self.lambda,
        }
    }

    pub fn effective_radius(&self) -> f64 {
        self.radius.unwrap_or(match self.convexity {
            Convexity::Convex => 50.0,
            Convexity::StronglyConvex => 1.0 / self.lambda,
        })
    }

    /// Canonical text form; parsing it yields an equal config.
    pub fn to_config_string(&self) -> String {
        fn enum_str<T: Serialize>(v: &T) -> String {
            match serde_json::to_value(v) {
                Ok(serde_json::Value::String(s)) => s,
                other => format!("{other:?}"),
            }
        }
        fn join<T: ToString>(v: &[T]) -> String {
            v.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
        }
        let opt = |v: Option<String>, none: &str| v.unwrap_or_else(|| none.to_string());
        let mut s = String::new();
        let _ = writeln!(s, "[data]");
        let _ = writeln!(s, "dataset = {}", enum_str(&self.dataset));
        let _ = writeln!(s, "data_dir = {}", self.data_dir.display());
        let _ = writeln!(s, "pca_dims = {}", opt(self.pca_dims.map(|v| v.to_string()), "none"));
        let _ = writeln!(s, "per_node = {}", opt(self.per_node.map(|v| v.to_string()), "auto"));
        let _ = writeln!(s, "seed = {}", self.data_seed);
        let _ = writeln!(s, "\n[synthetic]");
        let _ = writeln!(s, "classes = {}", self.synthetic.classes);
        let _ = writeln!(s, "dim = {}", self.synthetic.dim);
        let _ = writeln!(s, "separation = {}", self.synthetic.separation);
        let _ = writeln!(s, "spread = {}", self.synthetic.spread);
        let _ = writeln!(s, "train_samples = {}", self.synthetic.samples);
        let _ = writeln!(s, "test_samples = {}", self.synthetic_test_samples);
        let _ = writeln!(s, "\n[training]");
        let algs: Vec<&str> = self.algorithms.iter().map(|a| a.name()).collect();
        let _ = writeln!(s, "algorithms = {}", algs.join(", "));
        let _ = writeln!(s, "convexity = {}", enum_str(&self.convexity));
        let _ = writeln!(s, "nodes = {}", self.nodes);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "eta = {}", self.eta);
        let _ = writeln!(s, "schedule = {}", enum_str(&self.schedule));
        let _ = writeln!(s, "lambda = {}", self.lambda);
        let _ = writeln!(s, "radius = {}", opt(self.radius.map(|v| v.to_string()), "auto"));
        let _ = writeln!(s, "scheduler = {}", enum_str(&self.scheduler));
        let _ = writeln!(s, "mode = {}", enum_str(&self.mode));
        let _ = writeln!(s, "a = {}", self.a);
        let _ = writeln!(s, "adaptive_model = {}", enum_str(&self.adaptive_model));
        let _ = writeln!(s, "\n[privacy]");
        let _ = writeln!(s, "epsilon = {}", join(&self.epsilons));
        let delta = match self.delta {
            DeltaRule::InverseSquare => "auto".to_string(),
            DeltaRule::Fixed(d) => d.to_string(),
        };
        let _ = writeln!(s, "delta = {delta}");
        let _ = writeln!(s, "noise_norm_mode = {}", enum_str(&self.noise_norm_mode));
        let _ = writeln!(s, "baseline_passes = {}", self.baseline_passes);
        let _ = writeln!(s, "\n[controller]");
        let _ = writeln!(s, "hidden = {}", self.controller.hidden);
        let _ = writeln!(s, "memory = {}", self.controller.memory_capacity);
        let _ = writeln!(s, "minibatch = {}", self.controller.minibatch);
        let _ = writeln!(s, "gamma_dq = {}", self.controller.gamma_dq);
        let _ = writeln!(s, "sync_period = {}", self.controller.sync_period);
        let _ = writeln!(s, "learning_rate = {}", self.controller.learning_rate);
        let _ = writeln!(s, "anneal_steps = {}", opt(self.anneal_steps.map(|v| v.to_string()), "auto"));
        let _ = writeln!(s, "min_action_probability = {}", self.min_action_probability);
        let _ = writeln!(s, "\n[run]");
        let _ = writeln!(s, "seeds = {}", join(&self.seeds));
        let _ = writeln!(s, "threads = {}", self.threads);
        let _ = writeln!(s, "out = {}", self.out_dir.display());
        let _ = writeln!(s, "write_ledgers = {}", self.write_ledgers);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_lists() {
        let text = "
# comment
[data]
dataset = synthetic
[training]
algorithms = noiseless, adaptive
convexity = strongly_convex
nodes = 3 ; trailing comment
[privacy]
epsilon = 0.3, 0.5, 1
[run]
seeds = 1..3, 9
";
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.dataset, DatasetKind::Synthetic);
        assert_eq!(c.pca_dims, None);
        assert_eq!(c.algorithms, vec![Algorithm::Noiseless, Algorithm::Adaptive]);
        assert_eq!(c.nodes, 3);
        assert_eq!(c.epsilons, vec![0.3, 0.5, 1.0]);
        assert_eq!(c.seeds, vec![1, 2, 3, 9]);
        assert_eq!(c.effective_radius(), 1e4);
    }

    #[test]
    fn errors_name_the_line() {
        let e = ExperimentConfig::parse("[training]\nnodes = three\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 2, .. }), "{e}");
        let e = ExperimentConfig::parse("[training]\nbogus = 1\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 2, .. }), "{e}");
        let e = ExperimentConfig::parse("just text\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 1, .. }), "{e}");
    }

    #[test]
    fn canonical_form_round_trips() {
        let c = ExperimentConfig {
            dataset: DatasetKind::Covertype,
            pca_dims: None,
            epsilons: vec![0.2, 0.999],
            radius: Some(7.5),
            ..ExperimentConfig::default()
        };
        let back = ExperimentConfig::parse(&c.to_config_string()).unwrap();
        assert_eq!(back, c);
    }
}
