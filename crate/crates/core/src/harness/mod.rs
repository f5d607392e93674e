//! Experiment configuration, seeded multi-run orchestration, CSV records,
//! aggregation, plots and hyperparameter sweeps.

pub mod aggregate;
pub mod config;
pub mod plot;
pub mod runner;
pub mod sweep;

pub use aggregate::{aggregate, Aggregate, CurvePoint};
pub use config::{AlgoId, EnvId, ExperimentConfig};
pub use runner::{load_records, run_experiment, EvalPoint, RunRecord};
pub use sweep::{best_cell, sweep, CellResult};
