use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("duality gap {gap:.3e} exceeds tolerance {tol:.3e}")]
    GapExceeded { gap: f64, tol: f64 },

    #[error(transparent)]
    Core(#[from] pacmet::Error),

    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for solver failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::GapExceeded { .. } | CliError::Core(pacmet::Error::SolverDiverged(_)) => 2,
            _ => 1,
        }
    }
}
