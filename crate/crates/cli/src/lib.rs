//! Configuration, experiment runs, reports and acceptance checks for `fockwatch`.

use std::path::Path;

pub mod acceptance;
pub mod config;
pub mod experiments;
pub mod manifest;
pub mod report;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration:\n{0}")]
    Config(#[from] config::ConfigErrors),

    #[error(transparent)]
    Core(#[from] fockwatch::Error),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("format: {0}")]
    Format(String),

    #[error("integrity: {0}")]
    Integrity(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
