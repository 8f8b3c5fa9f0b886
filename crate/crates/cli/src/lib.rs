//! Command-line front end: TOML experiment configs driving dataset
//! generation, ensemble uncertainty, training runs and analyses.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::{cmd_analyze, cmd_synth, cmd_train, cmd_uncertainty, execute, CommandOutput};
pub use config::{Command, ExperimentConfig};
pub use error::{CliError, Result};
pub use output::{Artifacts, OutputDir};
