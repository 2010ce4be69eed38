use std::path::PathBuf;

use hpr_core::{DataError, FitError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("labels are required for evaluation")]
    MissingLabels,
    #[error("invalid JSON in {path}: {message}")]
    Json { path: PathBuf, message: String },
}

impl CliError {
    /// 2: usage, 3: input or data problem, 4: numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } | CliError::Parse { .. } | CliError::Data(_) | CliError::MissingLabels | CliError::Json { .. } => 3,
            CliError::Fit(FitError::Data(_)) => 3,
            CliError::Fit(_) => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}
