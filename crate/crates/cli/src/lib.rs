//! Experiment harness around the `countlab` library: configuration,
//! the `build-gestures` / `run` / `compare` / `report` commands and their
//! plain-text outputs.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::{cmd_build_gestures, cmd_compare, cmd_report, cmd_run, Metric};
pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
