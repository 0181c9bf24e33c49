use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dpsgd::harness::{
    check, config::default_data_dir, config::parse_seeds, datasets, prepare, privacy_audit,
    run_experiment, sweep, ExperimentConfig, SweepAxis,
};

#[derive(Parser)]
#[command(name = "dpsgd", version, about = "Decentralized differentially private SGD experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seeds, e.g. `1,2,3` or `1..5` (overrides the config).
    #[arg(long)]
    seeds: Option<String>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn load(&self) -> dpsgd::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = parse_seeds(s)?;
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured algorithm, epsilon and seed.
    Run(Common),
    /// Repeat a run over values of one axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// epsilon, batch or nodes.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Compare measured suboptimality with the convergence bounds on a
    /// synthetic task.
    CheckBounds {
        #[arg(long, default_value = "results/bounds")]
        out: PathBuf,
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Re-validate the privacy ledgers in a results directory.
    PrivacyAudit {
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Dataset helpers.
    Datasets {
        #[command(subcommand)]
        command: DatasetCommand,
    },
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Print download URLs and expected SHA-256 digests, and verify local
    /// copies. Does not download anything.
    Fetch {
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> dpsgd::Result<bool> {
    match cli.command {
        Command::Run(common) => {
            let cfg = common.load()?;
            let out = run_experiment(&cfg)?;
            println!("{}", dpsgd::harness::run::RESULTS_HEADER);
            for r in out.rows() {
                println!("{}", r.csv_line(true));
            }
            eprintln!("wrote {}", cfg.out_dir.display());
        }
        Command::Sweep {
            common,
            axis,
            values,
        } => {
            let cfg = common.load()?;
            let axis = SweepAxis::parse(&axis)?;
            let data = prepare(&cfg)?;
            let rows = sweep::sweep(&cfg, &data, axis, &values)?;
            sweep::write_sweep(&cfg, axis, &rows, &cfg.out_dir)?;
            println!("value,algorithm,runs,median_accuracy,iqr");
            for s in sweep::summarize(&rows) {
                println!("{},{},{},{:.4},{:.4}", s.value, s.algorithm.name(), s.runs, s.median, s.iqr());
            }
        }
        Command::CheckBounds { out, seeds } => {
            let mut bcfg = check::BoundCheckConfig::default();
            let mut rcfg = check::RateCheckConfig::default();
            if let Some(s) = seeds {
                bcfg.seeds = parse_seeds(&s)?;
                rcfg.seeds = bcfg.seeds.clone();
            }
            std::fs::create_dir_all(&out)?;
            let rows = check::check_strongly_convex_bound(&bcfg)?;
            check::write_bound_check_csv(&rows, &out.join("bound_check.csv"))?;
            let rate = check::check_distance_rate(&rcfg)?;
            check::write_rate_csv(&rate, &out.join("distance_rate.csv"))?;
            let mut ok = true;
            for r in &rows {
                println!(
                    "eps={} b={} measured={:.5} bound={:.5} {}",
                    r.epsilon,
                    r.batch,
                    r.measured,
                    r.bound,
                    if r.holds() { "ok" } else { "VIOLATED" }
                );
                ok &= r.holds();
            }
            let slope_ok = (-1.3..=-0.7).contains(&rate.slope);
            println!("distance slope={:.3} {}", rate.slope, if slope_ok { "ok" } else { "OUT OF RANGE" });
            return Ok(ok && slope_ok);
        }
        Command::PrivacyAudit { out } => {
            let lines = privacy_audit(&out)?;
            let mut ok = true;
            for l in &lines {
                if !l.ok {
                    println!("FAIL {}: {}", l.run, l.message);
                }
                ok &= l.ok;
            }
            println!("{} entries audited, {}", lines.len(), if ok { "clean" } else { "violations found" });
            return Ok(ok);
        }
        Command::Datasets {
            command: DatasetCommand::Fetch { data_dir },
        } => {
            print!("{}", datasets::fetch_report(&data_dir.unwrap_or_else(default_data_dir))?);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
