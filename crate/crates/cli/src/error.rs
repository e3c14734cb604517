use std::path::{Path, PathBuf};

use groundplan::example_store::StoreError;
use groundplan::lm::LmError;
use groundplan::metrics::MetricsError;
use groundplan::planner::PlanError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },
    #[error("invalid argument: {0}")]
    Usage(String),
    #[error("backend error: {0}")]
    Backend(#[from] LmError),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("cannot write {}: {message}", path.display())]
    Output { path: PathBuf, message: String },
}

impl CliError {
    pub fn input(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Input {
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }

    /// Process exit status: 2 for bad input, 3 for backend failures, 4 for
    /// internal invariant violations.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input { .. } | CliError::Usage(_) | CliError::Output { .. } => 2,
            CliError::Backend(_) => 3,
            CliError::Invariant(_) => 4,
        }
    }
}

impl From<PlanError> for CliError {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::Lm(e) | PlanError::Store(StoreError::Lm(e)) => CliError::Backend(e),
            PlanError::Invariant(msg) => CliError::Invariant(msg),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::IdSpaceMismatch { .. } => CliError::Usage(e.to_string()),
            MetricsError::Empty => CliError::Invariant(e.to_string()),
        }
    }
}
