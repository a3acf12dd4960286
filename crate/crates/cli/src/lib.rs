//! Experiment driver for the mixed multiscale elasticity solver: JSON
//! configs in, CSV tables, SVG plots and field rasters out.

pub mod config;
pub mod error;
pub mod experiment;
pub mod report;
pub mod selftest;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
pub use experiment::{run_decay, run_experiment, Measurement, ReportRow, RunOutput};
