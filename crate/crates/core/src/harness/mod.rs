//! Experiment harness: config parsing, dataset preparation, runs, sweeps,
//! bound checks and ledger audits.

pub mod check;
pub mod config;
pub mod datasets;
pub mod run;
pub mod sweep;

pub use check::{check_distance_rate, check_strongly_convex_bound, BoundCheckConfig, RateCheckConfig};
pub use config::{Algorithm, DatasetKind, ExperimentConfig};
pub use datasets::{prepare, PreparedData};
pub use run::{privacy_audit, run_experiment, run_experiment_with_data, ExperimentOutput, ResultRow};
pub use sweep::{sweep, SweepAxis};
