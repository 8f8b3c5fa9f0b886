use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] class_uncertainty::Error),

    #[error("{}: {reason}", path.display())]
    ConfigParse { path: PathBuf, reason: String },

    #[error("config: {0}")]
    Config(String),

    #[error("output directory {}: {reason}", path.display())]
    Output { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Category printed in `error[category]: message`.
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.category(),
            CliError::ConfigParse { .. } => "config-parse",
            CliError::Config(_) => "config",
            CliError::Output { .. } => "output",
            CliError::Io(_) => "io",
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }
}
