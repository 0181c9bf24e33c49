//! Exit criteria. Each test prints one `PASS` or `FAIL` line and fails when
//! its criterion is not met. MNIST criteria read the IDX files from
//! `$DPSGD_DATA_DIR/mnist` (default: `<workspace>/data/mnist`); Covertype
//! from `.../covertype/covtype.data`.

mod common;

use std::io::Write;
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use common::{oracle_round_robin_sgd, random_task};
use dpsgd::adaptive::{run_adaptive, AdaptiveConfig, ControllerMode};
use dpsgd::collaborative::{run_collaborative, CollaborativeConfig};
use dpsgd::data::partition;
use dpsgd::deep_q::{anneal_explr, Action, ControllerConfig, QController, QNetwork, Transition};
use dpsgd::harness::check::{check_distance_rate, check_strongly_convex_bound, BoundCheckConfig, RateCheckConfig};
use dpsgd::harness::sweep::median;
use dpsgd::harness::{
    prepare, privacy_audit, run_experiment_with_data, Algorithm, DatasetKind, ExperimentConfig, PreparedData,
    ResultRow,
};
use dpsgd::linalg::{gaussian_vector, RngStream};
use dpsgd::loss::{grad, LossParams, Sample};
use dpsgd::privacy::{noise_sigma, sensitivity_step, PrivacySpec};

/// Prints on the raw stderr handle, which test output capture does not touch.
fn report(criterion: u32, pass: bool, detail: &str) {
    let line = format!("\n{} criterion {criterion}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {criterion} not met: {detail}");
}

fn data_dir() -> PathBuf {
    std::env::var_os("DPSGD_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

const EPSILONS: [f64; 3] = [0.3, 0.5, 0.999];

fn mnist_config(algorithms: Vec<Algorithm>, epsilons: Vec<f64>) -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetKind::Mnist,
        data_dir: data_dir(),
        algorithms,
        nodes: 10,
        per_node: Some(60_000),
        batch_size: 50,
        eta: 0.1,
        epsilons,
        seeds: (1..=5).collect(),
        threads: 0,
        ..ExperimentConfig::default()
    }
}

struct MnistResults {
    noiseless: Vec<ResultRow>,
    noiseless_secs: f64,
    private: Vec<ResultRow>,
}

fn mnist_data() -> &'static Result<PreparedData, String> {
    static DATA: OnceLock<Result<PreparedData, String>> = OnceLock::new();
    DATA.get_or_init(|| prepare(&mnist_config(vec![], vec![])).map_err(|e| e.to_string()))
}

fn mnist() -> &'static Result<MnistResults, String> {
    static RESULTS: OnceLock<Result<MnistResults, String>> = OnceLock::new();
    RESULTS.get_or_init(|| {
        let data = mnist_data().as_ref().map_err(Clone::clone)?;
        let start = Instant::now();
        let noiseless = run_experiment_with_data(&mnist_config(vec![Algorithm::Noiseless], vec![0.999]), data)
            .map_err(|e| e.to_string())?
            .rows();
        let noiseless_secs = start.elapsed().as_secs_f64();
        let private = run_experiment_with_data(
            &mnist_config(
                vec![Algorithm::Collaborative, Algorithm::Adaptive, Algorithm::Baseline],
                EPSILONS.to_vec(),
            ),
            data,
        )
        .map_err(|e| e.to_string())?
        .rows();
        Ok(MnistResults {
            noiseless,
            noiseless_secs,
            private,
        })
    })
}

/// Median test accuracy (final model, in percent) over seeds.
fn median_accuracy(rows: &[ResultRow], alg: Algorithm, eps: Option<f64>) -> f64 {
    let acc: Vec<f64> = rows
        .iter()
        .filter(|r| r.algorithm == alg && r.epsilon == eps)
        .map(|r| 100.0 * r.accuracy)
        .collect();
    assert!(!acc.is_empty(), "no rows for {alg:?} at {eps:?}");
    median(&acc)
}

#[test]
fn criterion_1_noiseless_accuracy() {
    let mnist_part = match mnist() {
        Ok(r) => {
            let acc = median_accuracy(&r.noiseless, Algorithm::Noiseless, None);
            let ok = (acc - 86.83).abs() <= 2.0 && r.noiseless_secs <= 300.0;
            (ok, format!("MNIST {acc:.2}% (target 86.83 +- 2.0) in {:.0}s", r.noiseless_secs))
        }
        Err(e) => (false, format!("MNIST unavailable: {e}")),
    };
    let mut cfg = ExperimentConfig {
        dataset: DatasetKind::Covertype,
        data_dir: data_dir(),
        pca_dims: None,
        algorithms: vec![Algorithm::Noiseless],
        nodes: 10,
        seeds: (1..=5).collect(),
        threads: 0,
        ..ExperimentConfig::default()
    };
    let cov_part = match prepare(&cfg) {
        Ok(data) => {
            cfg.per_node = Some(data.train.len() / cfg.nodes);
            let start = Instant::now();
            match run_experiment_with_data(&cfg, &data) {
                Ok(out) => {
                    let secs = start.elapsed().as_secs_f64();
                    let acc = median_accuracy(&out.rows(), Algorithm::Noiseless, None);
                    ((acc - 62.83).abs() <= 2.0 && secs <= 300.0, format!("Covertype {acc:.2}% (target 62.83 +- 2.0) in {secs:.0}s"))
                }
                Err(e) => (false, format!("Covertype run failed: {e}")),
            }
        }
        Err(e) => (false, format!("Covertype unavailable: {e}")),
    };
    report(1, mnist_part.0 && cov_part.0, &format!("{}; {}", mnist_part.1, cov_part.1));
}

#[test]
fn criterion_2_private_accuracy_and_ordering() {
    let r = match mnist() {
        Ok(r) => r,
        Err(e) => return report(2, false, &format!("MNIST unavailable: {e}")),
    };
    let a1 = median_accuracy(&r.private, Algorithm::Collaborative, Some(0.999));
    let a2 = median_accuracy(&r.private, Algorithm::Adaptive, Some(0.999));
    let mut ok = (a1 - 76.80).abs() <= 5.0 && (a2 - 80.52).abs() <= 5.0;
    let mut detail = format!("eps=0.999 collaborative {a1:.2}% (76.80 +- 5), adaptive {a2:.2}% (80.52 +- 5); ordering");
    for eps in EPSILONS {
        let c = median_accuracy(&r.private, Algorithm::Collaborative, Some(eps));
        let a = median_accuracy(&r.private, Algorithm::Adaptive, Some(eps));
        ok &= a >= c - 1.0;
        detail.push_str(&format!(" eps={eps}: {a:.2} vs {c:.2}"));
    }
    report(2, ok, &detail);
}

#[test]
fn criterion_3_collaborative_beats_multipass_baseline() {
    let r = match mnist() {
        Ok(r) => r,
        Err(e) => return report(3, false, &format!("MNIST unavailable: {e}")),
    };
    let mut ok = true;
    let mut detail = String::from("collaborative vs baseline");
    for eps in EPSILONS {
        let c = median_accuracy(&r.private, Algorithm::Collaborative, Some(eps));
        let b = median_accuracy(&r.private, Algorithm::Baseline, Some(eps));
        ok &= c >= b;
        detail.push_str(&format!(" eps={eps}: {c:.2} vs {b:.2}"));
    }
    report(3, ok, &detail);
}

#[test]
fn criterion_4_sensitivity_suites() {
    // Per-step: one sample of a batch replaced, same start point.
    let mut rng = RngStream::new(404);
    let mut step_violations = 0;
    for trial in 0..1000 {
        let p = if trial % 2 == 0 {
            LossParams::new(0.0, 1.0 + 49.0 * rng.uniform()).unwrap()
        } else {
            let l = 0.01 + 0.99 * rng.uniform();
            LossParams::new(l, 1.0 / l).unwrap()
        };
        let b = 1 + rng.below(30);
        let eta = 0.001 + rng.uniform();
        let task = random_task(5, b + 1, rng.next_u64());
        let w: Vec<f64> = random_point(&mut rng, 5, p.radius);
        let batch: Vec<usize> = (0..b).collect();
        let mut neighbour = batch.clone();
        neighbour[rng.below(b)] = b;
        let d = step_distance(&task, &w, &batch, &neighbour, eta, &p);
        if d > sensitivity_step(eta, p.constants().l, b) + 1e-12 {
            step_violations += 1;
        }
    }
    // Windowed: j local steps then a global step, one sample differing.
    let mut window_violations = 0;
    for trial in 0..200 {
        let p = if trial % 2 == 0 {
            LossParams::new(0.0, 1.0 + 49.0 * rng.uniform()).unwrap()
        } else {
            let l = 0.01 + 0.99 * rng.uniform();
            LossParams::new(l, 1.0 / l).unwrap()
        };
        let c = p.constants();
        let j = 1 + rng.below(5);
        let b = 1 + rng.below(10);
        let task = random_task(5, (j + 1) * b + 1, rng.next_u64());
        let etas: Vec<f64> = (0..=j).map(|_| (0.01 + 0.99 * rng.uniform()) / (2.0 * c.mu)).collect();
        let batches: Vec<Vec<usize>> = (0..=j).map(|k| (k * b..(k + 1) * b).collect()).collect();
        let mut neighbour = batches.clone();
        let at = rng.below(j + 1);
        neighbour[at][rng.below(b)] = (j + 1) * b;
        let wg = random_point(&mut rng, 5, p.radius);
        let wl = random_point(&mut rng, 5, p.radius);
        let d = window_distance(&task, &wg, &wl, &batches, &neighbour, &etas, &p);
        let window: Vec<(f64, usize)> = etas.iter().map(|&e| (e, b)).collect();
        let bound = dpsgd::privacy::sensitivity_window(&window, c.l, c.mu).unwrap();
        if d > bound + 1e-10 {
            window_violations += 1;
        }
    }
    report(
        4,
        step_violations == 0 && window_violations == 0,
        &format!("{step_violations}/1000 per-step violations, {window_violations}/200 windowed violations"),
    );
}

fn random_point(rng: &mut RngStream, dim: usize, radius: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let r = radius * rng.uniform();
    v.iter().map(|x| x * r / n).collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn step_distance(
    task: &dpsgd::data::BinaryTask,
    w: &[f64],
    a: &[usize],
    b: &[usize],
    eta: f64,
    p: &LossParams,
) -> f64 {
    let mut wa = w.to_vec();
    let mut wb = w.to_vec();
    let mut rng = RngStream::new(0);
    dpsgd::collaborative::noisy_step(&mut wa, task, a, eta, 0.0, p, &mut rng).unwrap();
    dpsgd::collaborative::noisy_step(&mut wb, task, b, eta, 0.0, p, &mut rng).unwrap();
    dist(&wa, &wb)
}

fn window_distance(
    task: &dpsgd::data::BinaryTask,
    wg: &[f64],
    wl: &[f64],
    a: &[Vec<usize>],
    b: &[Vec<usize>],
    etas: &[f64],
    p: &LossParams,
) -> f64 {
    let run = |batches: &[Vec<usize>]| {
        let mut g = wg.to_vec();
        let mut l = wl.to_vec();
        let last = batches.len() - 1;
        for (k, batch) in batches.iter().enumerate() {
            if k < last {
                dpsgd::adaptive::local_step(&mut l, task, batch, etas[k], p).unwrap();
            } else {
                dpsgd::adaptive::global_step(&mut g, &mut l, task, batch, etas[k], 0.0, p, &mut RngStream::new(0))
                    .unwrap();
            }
        }
        g
    };
    dist(&run(a), &run(b))
}

#[test]
fn criterion_5_noise_calibration() {
    let spec = PrivacySpec::new(0.5, 1e-6).unwrap();
    let sigma = noise_sigma(&spec, 0.004);
    let n = 1_000_000;
    let draws = gaussian_vector(&mut RngStream::derive(5, "noise", 0), n, sigma).unwrap();
    let mean = draws.as_slice().iter().sum::<f64>() / n as f64;
    let var = draws.as_slice().iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    let rel = (var / (sigma * sigma) - 1.0).abs();
    let l = 1.0;
    let s_b = noise_sigma(&spec, sensitivity_step(0.1, l, 50));
    let s_2b = noise_sigma(&spec, sensitivity_step(0.1, l, 100));
    let halves = (s_2b / s_b - 0.5).abs() < 1e-12;
    report(
        5,
        rel <= 0.01 && halves,
        &format!("sigma={sigma:.6}, empirical variance off by {:.3}%, sigma(2b)/sigma(b)={:.6}", 100.0 * rel, s_2b / s_b),
    );
}

#[test]
fn criterion_6_privacy_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig {
        dataset: DatasetKind::Synthetic,
        pca_dims: None,
        algorithms: vec![Algorithm::Collaborative, Algorithm::Adaptive, Algorithm::Baseline],
        nodes: 4,
        epsilons: vec![0.5, 0.999],
        seeds: vec![1, 2],
        out_dir: dir.path().to_path_buf(),
        write_ledgers: true,
        ..ExperimentConfig::default()
    };
    cfg.synthetic.samples = 800;
    cfg.synthetic_test_samples = 200;
    let out = dpsgd::harness::run_experiment(&cfg).unwrap();
    let mut single_use = true;
    let mut baseline_max = 0;
    for cell in &out.cells {
        for t in &cell.tasks {
            let ledger = t.ledger.as_ref().expect("full ledgers requested");
            match cell.row.algorithm {
                Algorithm::Baseline => baseline_max = baseline_max.max(ledger.max_count()),
                _ => {
                    let owned: Vec<usize> = ledger.counts().keys().copied().collect();
                    single_use &= owned.len() == cell.owned && ledger.all_used_exactly(&owned, 1);
                }
            }
        }
    }
    let audit = privacy_audit(dir.path()).unwrap();
    let clean = !audit.is_empty() && audit.iter().all(|l| l.ok);
    report(
        6,
        single_use && clean && baseline_max <= 5,
        &format!(
            "single-pass runs use every sample once: {single_use}; audit of {} entries clean: {clean}; baseline max uses {baseline_max}",
            audit.len()
        ),
    );
}

#[test]
fn criterion_7_degenerate_configurations_match_references() {
    let task = random_task(6, 300, 77);
    let p = LossParams::new(0.01, 5.0).unwrap();
    let spec = PrivacySpec::new(0.5, 1e-5).unwrap();

    // Adaptive training that always commits globally, one node, privacy on.
    let part = partition(task.len(), 1, 300, &mut RngStream::new(3)).unwrap();
    let collab = run_collaborative(
        &task,
        &part,
        &CollaborativeConfig {
            privacy: Some(spec),
            ..CollaborativeConfig::new(10, 0.1, p, 9)
        },
    )
    .unwrap();
    let adaptive = run_adaptive(
        &task,
        &part,
        &AdaptiveConfig {
            privacy: Some(spec),
            controller_mode: ControllerMode::Fixed(Action::Global),
            ..AdaptiveConfig::new(10, 0.1, p, 9)
        },
    )
    .unwrap();
    let same_global = adaptive.global_model.as_slice() == collab.final_model.as_slice();

    // Noise-free collaborative training against plain projected SGD.
    let task3 = random_task(3, 240, 78);
    let p3 = LossParams::new(0.01, 0.4).unwrap();
    let part = partition(task3.len(), 4, 60, &mut RngStream::new(4)).unwrap();
    let run = run_collaborative(&task3, &part, &CollaborativeConfig::new(7, 0.5, p3, 10)).unwrap();
    let oracle = oracle_round_robin_sgd(&task3, &part, 7, 0.5, 0.01, 0.4, 10);
    let same_sgd = run.final_model.as_slice() == &oracle[..];
    report(
        7,
        same_global && same_sgd,
        &format!("always-global adaptive == collaborative: {same_global}; noise-free == projected SGD: {same_sgd}"),
    );
}

#[test]
fn criterion_8_bound_checks() {
    let rows = check_strongly_convex_bound(&BoundCheckConfig::default()).unwrap();
    let violated: Vec<String> = rows
        .iter()
        .filter(|r| !r.holds())
        .map(|r| format!("eps={} b={}: {:.4} > {:.4}", r.epsilon, r.batch, r.measured, r.bound))
        .collect();
    let rate = check_distance_rate(&RateCheckConfig::default()).unwrap();
    let slope_ok = (-1.3..=-0.7).contains(&rate.slope);
    report(
        8,
        violated.is_empty() && rows.len() == 6 && slope_ok,
        &format!(
            "{}/{} grid points within bound{}; distance slope {:.3} (in [-1.3, -0.7]: {slope_ok})",
            rows.len() - violated.len(),
            rows.len(),
            if violated.is_empty() { String::new() } else { format!(" ({})", violated.join(", ")) },
            rate.slope
        ),
    );
}

#[test]
fn criterion_9_expansiveness_and_boundedness() {
    let mut rng = RngStream::new(909);
    let mut expansive = [0usize; 2];
    let mut bounded = [0usize; 2];
    for kind in 0..2 {
        for _ in 0..10_000 {
            let p = if kind == 0 {
                LossParams::new(0.0, 1.0 + 49.0 * rng.uniform()).unwrap()
            } else {
                let l = 0.01 + 0.99 * rng.uniform();
                LossParams::new(l, 1.0 / l).unwrap()
            };
            let c = p.constants();
            let x = random_point(&mut rng, 5, 1.0);
            let y = if rng.uniform() < 0.5 { 1.0 } else { -1.0 };
            let s = Sample { x: &x, y };
            let w1 = random_point(&mut rng, 5, p.radius);
            let w2 = random_point(&mut rng, 5, p.radius);
            let update = |w: &[f64], eta: f64| -> Vec<f64> {
                let g = grad(w, s, &p);
                w.iter().zip(g.as_slice()).map(|(a, b)| a - eta * b).collect()
            };
            let (eta, factor) = if kind == 0 {
                let eta = 2.0 / c.mu * rng.uniform();
                (eta, 1.0)
            } else {
                let eta = rng.uniform() / c.mu;
                (eta, 1.0 - eta * c.gamma)
            };
            let d = dist(&update(&w1, eta), &update(&w2, eta));
            if d > factor * dist(&w1, &w2) * (1.0 + 1e-12) + 1e-12 {
                expansive[kind] += 1;
            }
            if dist(&update(&w1, eta), &w1) > eta * c.l * (1.0 + 1e-12) + 1e-12 {
                bounded[kind] += 1;
            }
        }
    }
    report(
        9,
        expansive == [0, 0] && bounded == [0, 0],
        &format!(
            "expansiveness violations convex {} strongly convex {}; boundedness violations convex {} strongly convex {} (10^4 pairs each)",
            expansive[0], expansive[1], bounded[0], bounded[1]
        ),
    );
}

#[test]
fn criterion_10_deep_q_suite() {
    let mut rng = RngStream::new(1010);
    let dim = 8;

    // Affine network: Q(a s1 + (1-a) s2) = a Q(s1) + (1-a) Q(s2).
    let net = QNetwork::glorot(dim, 128, &mut rng);
    let mut linearity: f64 = 0.0;
    for _ in 0..100 {
        let s1: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
        let s2: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
        let a = 4.0 * rng.uniform() - 2.0;
        let mix: Vec<f64> = s1.iter().zip(&s2).map(|(x, y)| a * x + (1.0 - a) * y).collect();
        let (q1, q2, qm) = (net.forward(&s1).unwrap(), net.forward(&s2).unwrap(), net.forward(&mix).unwrap());
        for k in 0..2 {
            linearity = linearity.max((qm[k] - (a * q1[k] + (1.0 - a) * q2[k])).abs());
        }
    }

    // Target network stays frozen between refreshes.
    let cfg = ControllerConfig {
        sync_period: 5,
        ..ControllerConfig::default()
    };
    let mut ctl = QController::new(dim, cfg, &mut rng);
    let initial = ctl.target().clone();
    let transition = |rng: &mut RngStream| Transition {
        state: (0..dim).map(|_| rng.standard_normal()).collect(),
        action: if rng.uniform() < 0.5 { Action::Local } else { Action::Global },
        reward: rng.standard_normal(),
        next_state: (0..dim).map(|_| rng.standard_normal()).collect(),
        terminal: false,
    };
    let mut stale = true;
    for step in 1..=12u64 {
        let t = transition(&mut rng);
        ctl.record_and_train(t, &mut rng).unwrap();
        let expected_sync = step / 5 * 5;
        if step % 5 == 0 {
            stale &= ctl.target() == ctl.online();
        } else if expected_sync == 0 {
            stale &= ctl.target() == &initial && ctl.online() != &initial;
        } else {
            stale &= ctl.target() != ctl.online();
        }
    }

    // Gradient fed to Adam against central differences of the TD loss.
    let batch: Vec<Transition> = (0..10).map(|_| transition(&mut rng)).collect();
    let refs: Vec<&Transition> = batch.iter().collect();
    let (_, g) = ctl.loss_and_gradient(&refs).unwrap();
    let mut worst_rel: f64 = 0.0;
    for i in (0..g.len()).step_by(37) {
        let h = 1e-6;
        let mut plus = ctl.clone();
        let mut minus = ctl.clone();
        perturb(&mut plus, i, h);
        perturb(&mut minus, i, -h);
        let fd = (plus.loss_and_gradient(&refs).unwrap().0 - minus.loss_and_gradient(&refs).unwrap().0) / (2.0 * h);
        let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-3);
        worst_rel = worst_rel.max(rel);
    }

    // Exploration: 1.0 at the first decision, 0.1 after n / (2 M b).
    let (n, m, b) = (600_000u64, 10u64, 50u64);
    let horizon = n / (2 * m * b);
    let anneal_ok = anneal_explr(0, horizon) == 1.0 && (anneal_explr(horizon, horizon) - 0.1).abs() < 1e-15;

    report(
        10,
        linearity <= 1e-9 && stale && worst_rel <= 1e-5 && anneal_ok,
        &format!(
            "affine error {linearity:.2e}; target sync staleness ok: {stale}; gradient vs finite difference worst relative {worst_rel:.2e}; annealing endpoints ok: {anneal_ok}"
        ),
    );
}

/// Shifts online parameter `i` by `h`, keeping the target network fixed.
fn perturb(ctl: &mut QController, i: usize, h: f64) {
    ctl.online_mut().params_mut()[i] += h;
}
