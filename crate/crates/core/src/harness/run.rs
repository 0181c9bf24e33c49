//! Runs every (algorithm, epsilon, seed) cell of a config, trains one binary
//! model per class, and writes `results.csv`, `ledger.json` and `bounds.csv`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::{
    AdaptiveModel, Algorithm, Convexity, DeltaRule, ExperimentConfig, ScheduleKind,
};
use super::datasets::{prepare, PreparedData};
use crate::adaptive::{run_adaptive, AdaptiveConfig, ControllerMode};
use crate::baseline::{run_multipass_baseline, BaselineConfig};
use crate::bounds::{
    bound_convex_adaptive, bound_convex_collaborative, bound_strongly_convex_collaborative,
    BoundInputs, BoundTerms,
};
use crate::collaborative::{run_collaborative, CollaborativeConfig, StepSchedule};
use crate::data::{accuracy, make_tasks, partition, partition_replicated, BinaryTask, NodePartition};
use crate::error::{Error, Result};
use crate::linalg::{DenseVector, RngStream};
use crate::loss::{subset_risk, LossParams};
use crate::privacy::{clamp_epsilon, delta_for, PrivacyLedger, PrivacySpec};

/// Header of `results.csv`, after the `#` metadata lines.
pub const RESULTS_HEADER: &str = "dataset,algorithm,convexity,nodes,per_node,batch_size,eta,\
epsilon,delta,seed,accuracy,accuracy_avg,train_risk,global_fraction,bound,wall_time_s";

/// Header of `bounds.csv`, after the `#` metadata lines.
pub const BOUNDS_HEADER: &str =
    "algorithm,epsilon,seed,class,kind,optimization,gradient,privacy,sampling,total,train_risk";

/// One trained multiclass model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub dataset: String,
    pub algorithm: Algorithm,
    pub convexity: Convexity,
    pub nodes: usize,
    pub per_node: usize,
    pub batch_size: usize,
    pub eta: f64,
    /// Effective epsilon after clamping; `None` without noise.
    pub epsilon: Option<f64>,
    pub delta: f64,
    pub seed: u64,
    /// Test accuracy of the final models, in `[0, 1]`.
    pub accuracy: f64,
    /// Test accuracy of the averaged iterates.
    pub accuracy_avg: f64,
    /// Mean over classes of the final model's empirical risk on the nodes'
    /// training data.
    pub train_risk: f64,
    /// Mean over classes of the fraction of updates that were global.
    pub global_fraction: f64,
    /// Mean over classes of the applicable convergence bound.
    pub bound: Option<f64>,
    pub wall_time_s: f64,
}

impl ResultRow {
    /// CSV line; `with_time = false` blanks the wall-time column.
    pub fn csv_line(&self, with_time: bool) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let time = if with_time {
            format!("{:.3}", self.wall_time_s)
        } else {
            String::new()
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.dataset,
            self.algorithm.name(),
            convexity_name(self.convexity),
            self.nodes,
            self.per_node,
            self.batch_size,
            self.eta,
            opt(self.epsilon),
            self.delta,
            self.seed,
            self.accuracy,
            self.accuracy_avg,
            self.train_risk,
            self.global_fraction,
            opt(self.bound),
            time
        )
    }
}

fn convexity_name(c: Convexity) -> &'static str {
    match c {
        Convexity::Convex => "convex",
        Convexity::StronglyConvex => "strongly_convex",
    }
}

/// Per-class training outcome.
#[derive(Debug, Clone)]
pub struct TaskOutcome {
    pub class: usize,
    pub model: DenseVector,
    /// Mean of the iterates at which gradients were taken (global model for
    /// adaptive runs).
    pub average_model: DenseVector,
    pub train_risk: f64,
    pub global_fraction: f64,
    pub bound: Option<(&'static str, BoundTerms)>,
    pub usage: UsageSummary,
    /// Full per-sample ledger, kept only when `write_ledgers` is set.
    pub ledger: Option<PrivacyLedger>,
    /// Uses every owned sample must show; `None` means only the limit applies.
    pub expected_uses: Option<u32>,
}

/// Compact form of a [`PrivacyLedger`]: how many samples were used how often.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UsageSummary {
    pub limit: u32,
    /// Use count -> number of samples with that count.
    pub count_histogram: BTreeMap<u32, usize>,
    pub steps: usize,
    pub noisy_steps: usize,
}

impl UsageSummary {
    pub fn of(ledger: &PrivacyLedger) -> Self {
        let mut count_histogram = BTreeMap::new();
        for &c in ledger.counts().values() {
            *count_histogram.entry(c).or_insert(0) += 1;
        }
        UsageSummary {
            limit: ledger.limit(),
            count_histogram,
            steps: ledger.steps().len(),
            noisy_steps: ledger.steps().iter().filter(|r| r.sigma > 0.0).count(),
        }
    }

    pub fn samples_used(&self) -> usize {
        self.count_histogram.values().sum()
    }

    pub fn max_count(&self) -> u32 {
        self.count_histogram.keys().next_back().copied().unwrap_or(0)
    }

    /// True when exactly `samples` distinct samples were used, each `times` times.
    pub fn all_used_exactly(&self, samples: usize, times: u32) -> bool {
        self.count_histogram.len() == 1 && self.count_histogram.get(&times) == Some(&samples)
    }
}

/// A row plus the per-class details behind it.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub row: ResultRow,
    pub tasks: Vec<TaskOutcome>,
    /// Samples owned by the nodes.
    pub owned: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub cells: Vec<CellOutcome>,
}

impl ExperimentOutput {
    pub fn rows(&self) -> Vec<ResultRow> {
        self.cells.iter().map(|c| c.row.clone()).collect()
    }
}

/// Quantities shared by every cell of a config.
#[derive(Debug, Clone, Copy)]
pub struct Resolved {
    pub per_node: usize,
    /// Nodes hold draws from private copies of the pool because
    /// `M * per_node` exceeds it.
    pub replicated: bool,
    /// `M * per_node`.
    pub n: usize,
    pub delta: f64,
    pub params: LossParams,
}

pub fn resolve(cfg: &ExperimentConfig, pool: usize) -> Result<Resolved> {
    let per_node = cfg.per_node.unwrap_or(pool / cfg.nodes);
    if per_node == 0 {
        return Err(Error::invalid(format!(
            "{} training rows cannot feed {} nodes",
            pool, cfg.nodes
        )));
    }
    let n = per_node * cfg.nodes;
    let replicated = n > pool;
    if replicated {
        if per_node > pool {
            return Err(Error::invalid(format!(
                "per_node {per_node} exceeds the {pool} training rows"
            )));
        }
        info!("{} nodes x {per_node} samples exceed the pool of {pool}; each node draws from its own copy", cfg.nodes);
    }
    let delta = match cfg.delta {
        DeltaRule::InverseSquare => delta_for(n),
        DeltaRule::Fixed(d) => d,
    };
    let params = LossParams::new(cfg.effective_lambda(), cfg.effective_radius())?;
    Ok(Resolved {
        per_node,
        replicated,
        n,
        delta,
        params,
    })
}

fn schedule_for(cfg: &ExperimentConfig) -> StepSchedule {
    let gamma = cfg.effective_lambda();
    match cfg.schedule {
        ScheduleKind::Constant => StepSchedule::Constant { eta: cfg.eta },
        ScheduleKind::StronglyConvex => StepSchedule::StronglyConvex { gamma },
        ScheduleKind::Scaled => StepSchedule::Scaled { a: cfg.a, gamma },
        ScheduleKind::InverseSqrt => StepSchedule::InverseSqrt,
    }
}

/// Epsilon values actually used; values `>= 1` map to 0.999.
pub fn effective_epsilons(cfg: &ExperimentConfig) -> Vec<f64> {
    cfg.epsilons
        .iter()
        .map(|&e| {
            let c = clamp_epsilon(e);
            if c != e {
                info!("epsilon {e} mapped to {c}");
            }
            c
        })
        .collect()
}

/// Cells in output order: algorithm, then epsilon, then seed. Noiseless
/// cells ignore epsilon and appear once per seed.
pub fn cell_keys(cfg: &ExperimentConfig) -> Vec<(Algorithm, Option<f64>, u64)> {
    let eps = effective_epsilons(cfg);
    let mut keys = Vec::new();
    for &alg in &cfg.algorithms {
        if alg.is_private() {
            for &e in &eps {
                keys.extend(cfg.seeds.iter().map(|&s| (alg, Some(e), s)));
            }
        } else {
            keys.extend(cfg.seeds.iter().map(|&s| (alg, None, s)));
        }
    }
    keys
}

fn task_seed(seed: u64, class: usize) -> u64 {
    RngStream::derive(seed, "task", class as u64).next_u64()
}

fn bound_for(
    cfg: &ExperimentConfig,
    res: &Resolved,
    alg: Algorithm,
    spec: &PrivacySpec,
    iterations: usize,
    global_updates: f64,
) -> Option<(&'static str, BoundTerms)> {
    let mut x = BoundInputs::for_loss(&res.params, spec, cfg.batch_size, res.n, iterations, cfg.eta);
    x.nodes = cfg.nodes;
    x.global_updates = global_updates;
    let r = match (alg, cfg.schedule) {
        (Algorithm::Collaborative, ScheduleKind::Constant) => {
            bound_convex_collaborative(&x).map(|b| ("convex_collaborative", b))
        }
        (Algorithm::Collaborative, ScheduleKind::StronglyConvex) if res.params.lambda > 0.0 => {
            bound_strongly_convex_collaborative(&x).map(|b| ("strongly_convex_collaborative", b))
        }
        (Algorithm::Adaptive, ScheduleKind::Constant) => {
            bound_convex_adaptive(&x).map(|b| ("convex_adaptive", b))
        }
        _ => return None,
    };
    match r {
        Ok(b) => Some(b),
        Err(e) => {
            warn!("bound skipped: {e}");
            None
        }
    }
}

/// Trains one binary task under one algorithm.
pub fn train_task(
    cfg: &ExperimentConfig,
    res: &Resolved,
    alg: Algorithm,
    epsilon: Option<f64>,
    task: &BinaryTask,
    part: &NodePartition,
    seed: u64,
) -> Result<TaskOutcome> {
    let spec = match epsilon {
        Some(e) if alg.is_private() => Some(PrivacySpec::new(e, res.delta)?),
        _ => None,
    };
    let schedule = schedule_for(cfg);
    let (model, average_model, global_fraction, bound, ledger, expected) = match alg {
        Algorithm::Noiseless | Algorithm::Collaborative => {
            let ccfg = CollaborativeConfig {
                batch_size: cfg.batch_size,
                schedule,
                privacy: spec,
                params: res.params,
                noise_mode: cfg.noise_norm_mode,
                scheduler: cfg.scheduler,
                seed,
                record_trajectory: false,
            };
            let run = run_collaborative(task, part, &ccfg)?;
            let bound = spec.and_then(|s| bound_for(cfg, res, alg, &s, run.steps.len(), run.steps.len() as f64));
            (run.final_model, run.average_model, 1.0, bound, run.ledger, Some(1))
        }
        Algorithm::Adaptive => {
            let mut controller = cfg.controller;
            controller.anneal_steps = cfg
                .anneal_steps
                .unwrap_or((res.per_node / (2 * cfg.batch_size)).max(1) as u64);
            let acfg = AdaptiveConfig {
                batch_size: cfg.batch_size,
                schedule,
                privacy: spec,
                params: res.params,
                noise_mode: cfg.noise_norm_mode,
                mode: cfg.mode,
                controller,
                controller_mode: ControllerMode::Learned,
                min_action_probability: cfg.min_action_probability,
                seed,
                record_trajectory: false,
            };
            let run = run_adaptive(task, part, &acfg)?;
            let decisions = run.actions.len().max(1);
            let fraction = run.global_updates as f64 / decisions as f64;
            let bound = spec.and_then(|s| {
                bound_for(cfg, res, alg, &s, decisions, run.global_updates as f64)
            });
            let model = match cfg.adaptive_model {
                AdaptiveModel::Global => run.global_model,
                AdaptiveModel::LocalMean => mean_model(&run.local_models),
            };
            (model, run.average_global, fraction, bound, run.ledger, Some(1))
        }
        Algorithm::Baseline => {
            let bcfg = BaselineConfig {
                batch_size: cfg.batch_size,
                passes: cfg.baseline_passes,
                privacy: spec,
                params: res.params,
                schedule: StepSchedule::InverseSqrt,
                noise_mode: cfg.noise_norm_mode,
                seed,
            };
            let run = run_multipass_baseline(task, part, &bcfg)?;
            (run.final_model, run.average_model, 1.0, None, run.ledger, None)
        }
    };
    let train_risk = subset_risk(model.as_slice(), task, &part.union(), &res.params)?;
    Ok(TaskOutcome {
        class: task.positive_class(),
        model,
        average_model,
        train_risk,
        global_fraction,
        bound,
        usage: UsageSummary::of(&ledger),
        ledger: cfg.write_ledgers.then_some(ledger),
        expected_uses: expected,
    })
}

/// Coordinate-wise mean of equally sized models.
pub fn mean_model(models: &[DenseVector]) -> DenseVector {
    let d = models.first().map_or(0, DenseVector::len);
    let mut sum = vec![0.0; d];
    for m in models {
        for (s, v) in sum.iter_mut().zip(m.as_slice()) {
            *s += v;
        }
    }
    let k = models.len().max(1) as f64;
    DenseVector::from_vec(sum.into_iter().map(|s| s / k).collect())
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs every cell on already prepared data. Results are in [`cell_keys`]
/// order regardless of thread count.
pub fn run_experiment_with_data(cfg: &ExperimentConfig, data: &PreparedData) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let res = resolve(cfg, data.train.len())?;
    let pool = data.train.len();
    let tasks = if res.replicated {
        make_tasks(&data.train.tile(cfg.nodes))?
    } else {
        make_tasks(&data.train)?
    };
    let keys = cell_keys(cfg);
    let mut partitions = BTreeMap::new();
    for &s in &cfg.seeds {
        let mut rng = RngStream::derive(s, "partition", 0);
        let p = if res.replicated {
            partition_replicated(pool, cfg.nodes, res.per_node, &mut rng)?
        } else {
            partition(pool, cfg.nodes, res.per_node, &mut rng)?
        };
        partitions.insert(s, p);
    }
    let units: Vec<(usize, usize)> = (0..keys.len())
        .flat_map(|k| (0..tasks.len()).map(move |c| (k, c)))
        .collect();
    let trained: Vec<Result<(TaskOutcome, f64)>> = in_pool(cfg.threads, || {
        units
            .par_iter()
            .map(|&(k, c)| {
                let (alg, eps, seed) = keys[k];
                let start = Instant::now();
                let out = train_task(cfg, &res, alg, eps, &tasks[c], &partitions[&seed], task_seed(seed, c))?;
                Ok((out, start.elapsed().as_secs_f64()))
            })
            .collect()
    })?;
    let mut trained = trained.into_iter();
    let mut cells = Vec::with_capacity(keys.len());
    for &(alg, eps, seed) in &keys {
        let mut outs = Vec::with_capacity(tasks.len());
        let mut wall = 0.0;
        for _ in 0..tasks.len() {
            let (o, t) = trained.next().expect("one result per unit")?;
            wall += t;
            outs.push(o);
        }
        let models: Vec<DenseVector> = outs.iter().map(|o| o.model.clone()).collect();
        let averages: Vec<DenseVector> = outs.iter().map(|o| o.average_model.clone()).collect();
        let k = outs.len() as f64;
        let bound = if outs.iter().all(|o| o.bound.is_some()) {
            Some(outs.iter().map(|o| o.bound.unwrap().1.total()).sum::<f64>() / k)
        } else {
            None
        };
        let row = ResultRow {
            dataset: dataset_name(cfg).into(),
            algorithm: alg,
            convexity: cfg.convexity,
            nodes: cfg.nodes,
            per_node: res.per_node,
            batch_size: cfg.batch_size,
            eta: cfg.eta,
            epsilon: eps,
            delta: res.delta,
            seed,
            accuracy: accuracy(&models, &data.test)?,
            accuracy_avg: accuracy(&averages, &data.test)?,
            train_risk: outs.iter().map(|o| o.train_risk).sum::<f64>() / k,
            global_fraction: outs.iter().map(|o| o.global_fraction).sum::<f64>() / k,
            bound,
            wall_time_s: wall,
        };
        info!(
            "{} eps={:?} seed={} accuracy={:.4} (averaged {:.4})",
            alg.name(),
            eps,
            seed,
            row.accuracy,
            row.accuracy_avg
        );
        cells.push(CellOutcome {
            row,
            tasks: outs,
            owned: res.n,
        });
    }
    Ok(ExperimentOutput { cells })
}

fn dataset_name(cfg: &ExperimentConfig) -> &'static str {
    match cfg.dataset {
        super::config::DatasetKind::Mnist => "mnist",
        super::config::DatasetKind::Covertype => "covertype",
        super::config::DatasetKind::Synthetic => "synthetic",
    }
}

/// Loads the data, runs every cell, and writes the outputs to `cfg.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let data = prepare(cfg)?;
    let out = run_experiment_with_data(cfg, &data)?;
    write_outputs(cfg, &out, &cfg.out_dir)?;
    Ok(out)
}

/// `git rev-parse HEAD`, or `unknown`.
pub fn git_hash() -> String {
    std::process::Command::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

/// `# key=value` lines: version, git hash, seeds, then the resolved config.
pub fn metadata_header(cfg: &ExperimentConfig) -> String {
    let mut s = format!(
        "# version={}\n# git={}\n# seeds={}\n",
        env!("CARGO_PKG_VERSION"),
        git_hash(),
        cfg.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(" ")
    );
    for line in cfg.to_config_string().lines() {
        if !line.is_empty() {
            s.push_str("# ");
            s.push_str(line);
            s.push('\n');
        }
    }
    s
}

pub fn write_results_csv(cfg: &ExperimentConfig, rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(metadata_header(cfg).as_bytes())?;
    writeln!(f, "{RESULTS_HEADER}")?;
    for r in rows {
        writeln!(f, "{}", r.csv_line(true))?;
    }
    f.flush()?;
    Ok(())
}

pub fn write_bounds_csv(cfg: &ExperimentConfig, out: &ExperimentOutput, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(metadata_header(cfg).as_bytes())?;
    writeln!(f, "{BOUNDS_HEADER}")?;
    for cell in &out.cells {
        for t in &cell.tasks {
            if let Some((kind, b)) = t.bound {
                writeln!(
                    f,
                    "{},{},{},{},{kind},{},{},{},{},{},{}",
                    cell.row.algorithm.name(),
                    cell.row.epsilon.map(|e| e.to_string()).unwrap_or_default(),
                    cell.row.seed,
                    t.class,
                    b.optimization,
                    b.gradient,
                    b.privacy,
                    b.sampling,
                    b.total(),
                    t.train_risk
                )?;
            }
        }
    }
    f.flush()?;
    Ok(())
}

fn run_label(cell: &CellOutcome, class: usize) -> String {
    let eps = cell.row.epsilon.map_or("none".to_string(), |e| e.to_string());
    format!("{}_eps{eps}_seed{}_class{class}", cell.row.algorithm.name(), cell.row.seed)
}

/// `ledger.json`: the config plus one compact entry per trained task with
/// its use-count histogram; see [`audit_ledger_json`].
pub fn ledger_json(cfg: &ExperimentConfig, out: &ExperimentOutput) -> Value {
    let runs: Vec<Value> = out
        .cells
        .iter()
        .flat_map(|cell| {
            cell.tasks.iter().map(move |t| {
                let hist: serde_json::Map<String, Value> = t
                    .usage
                    .count_histogram
                    .iter()
                    .map(|(k, v)| (k.to_string(), json!(v)))
                    .collect();
                json!({
                    "run": run_label(cell, t.class),
                    "algorithm": cell.row.algorithm.name(),
                    "epsilon": cell.row.epsilon,
                    "seed": cell.row.seed,
                    "class": t.class,
                    "owned_samples": cell.owned,
                    "limit": t.usage.limit,
                    "expected_uses": t.expected_uses,
                    "count_histogram": hist,
                    "steps": t.usage.steps,
                    "noisy_steps": t.usage.noisy_steps,
                })
            })
        })
        .collect();
    json!({
        "git": git_hash(),
        "config": cfg.to_config_string(),
        "runs": runs,
    })
}

/// Writes `results.csv`, `bounds.csv`, `ledger.json` and, if requested,
/// one full ledger per task under `ledgers/`.
pub fn write_outputs(cfg: &ExperimentConfig, out: &ExperimentOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_results_csv(cfg, &out.rows(), &dir.join("results.csv"))?;
    write_bounds_csv(cfg, out, &dir.join("bounds.csv"))?;
    std::fs::write(
        dir.join("ledger.json"),
        serde_json::to_string_pretty(&ledger_json(cfg, out))?,
    )?;
    if cfg.write_ledgers {
        let ldir = dir.join("ledgers");
        std::fs::create_dir_all(&ldir)?;
        for cell in &out.cells {
            for t in &cell.tasks {
                if let Some(ledger) = &t.ledger {
                    ledger.write_json(&ldir.join(format!("{}.json", run_label(cell, t.class))))?;
                }
            }
        }
    }
    Ok(())
}

/// Outcome of re-validating one ledger entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditLine {
    pub run: String,
    pub ok: bool,
    pub message: String,
}

fn audit_entry(entry: &Value) -> AuditLine {
    let run = entry["run"].as_str().unwrap_or("?").to_string();
    let check = || -> std::result::Result<String, String> {
        let limit = entry["limit"].as_u64().ok_or("missing limit")?;
        let owned = entry["owned_samples"].as_u64().ok_or("missing owned_samples")?;
        let expected = entry["expected_uses"].as_u64();
        let hist = entry["count_histogram"].as_object().ok_or("missing count_histogram")?;
        let mut used = 0u64;
        for (k, v) in hist {
            let count: u64 = k.parse().map_err(|_| format!("bad count {k:?}"))?;
            let samples = v.as_u64().ok_or("bad histogram value")?;
            if count > limit {
                return Err(format!("{samples} samples used {count} times, limit {limit}"));
            }
            if let Some(e) = expected {
                if count != e {
                    return Err(format!("{samples} samples used {count} times, expected {e}"));
                }
            }
            used += samples;
        }
        if expected.is_some() && used != owned {
            return Err(format!("{used} of {owned} owned samples used"));
        }
        Ok(format!("{used} samples within limit {limit}"))
    };
    match check() {
        Ok(message) => AuditLine { run, ok: true, message },
        Err(message) => AuditLine { run, ok: false, message },
    }
}

/// Re-validates every entry of a `ledger.json` document.
pub fn audit_ledger_json(doc: &Value) -> Result<Vec<AuditLine>> {
    let runs = doc["runs"]
        .as_array()
        .ok_or_else(|| Error::invalid("ledger.json has no runs array"))?;
    Ok(runs.iter().map(audit_entry).collect())
}

/// Audits `ledger.json` in `dir` and every full ledger under `dir/ledgers`.
pub fn privacy_audit(dir: &Path) -> Result<Vec<AuditLine>> {
    let path = dir.join("ledger.json");
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
    let mut lines = audit_ledger_json(&doc)?;
    let ldir = dir.join("ledgers");
    if ldir.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(&ldir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        for p in files {
            let run = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let v: Value = serde_json::from_str(&std::fs::read_to_string(&p)?)?;
            let line = match PrivacyLedger::from_json(&v).and_then(|l| l.audit()) {
                Ok(a) => AuditLine {
                    run,
                    ok: true,
                    message: format!("{} samples, counts {}..={}, limit {}", a.samples, a.min_count, a.max_count, a.limit),
                },
                Err(e) => AuditLine {
                    run,
                    ok: false,
                    message: e.to_string(),
                },
            };
            lines.push(line);
        }
    }
    Ok(lines)
}
