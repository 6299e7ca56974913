//! Batch harness around `capbench-core`: configuration files and flags,
//! parallel trial execution, and CSV/JSON result files.

pub mod args;
pub mod commands;
pub mod config;
pub mod experiment;
pub mod output;
pub mod parallel;

pub use commands::{cmd_bounds, cmd_mac, cmd_run, Outputs};
pub use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("run failed: {0}")]
    Run(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Process exit status: 1 for configuration errors, 2 for run failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Run(_) | CliError::Io(_) => 2,
        }
    }
}
