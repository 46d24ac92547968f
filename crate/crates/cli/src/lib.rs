//! Configuration, orchestration and file output for the `fbsde-lab` binary.

pub mod commands;
pub mod config;
pub mod emit;
pub mod error;
pub mod report;

pub use commands::{run, Command};
pub use config::{ExperimentConfig, Problem, DEFAULT_CONFIG};
pub use error::{CliError, CliResult};
pub use report::{OutputDir, RunReport};

/// The only environment variable the tool reads.
pub const OUT_DIR_ENV: &str = "FBSDE_LAB_OUT";
