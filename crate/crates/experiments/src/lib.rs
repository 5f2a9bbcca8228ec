//! Experiment harness: TOML configs, seeded trainer grids, CSV / JSON / SVG
//! artifacts and the λ sweep.

pub mod config;
pub mod error;
pub mod report;
pub mod runner;
pub mod sweep;

pub use config::ExperimentConfig;
pub use error::{ExperimentError, Result};
pub use runner::{run_experiment, RunOptions, RunSummary};
pub use sweep::{sweep_lambda, SweepReport};
