use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::models::ModelError;

#[derive(Debug, Error)]
pub enum ShredError {
    #[error(transparent)]
    Core(#[from] shred_core::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid config at `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("{0}")]
    Input(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    /// A numerical failure described for the user.
    #[error("{0}")]
    Numerical(String),
    #[error("covariance matrix is not positive definite, even after jitter")]
    NotPositiveDefinite,
    #[error("full model did not converge in {iterations} iterations")]
    NotConverged { iterations: usize },
    #[error("{failed} of {total} replicates failed")]
    TooManyFailures { failed: usize, total: usize },
}

impl ShredError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        ShredError::Config { field: field.into(), message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        ShredError::Io { path: path.into(), source }
    }

    /// Process exit status: 2 for bad input, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            ShredError::Model(m) => match m.root_cause() {
                ModelError::RankDeficient { .. } | ModelError::Singular => 3,
                _ => 2,
            },
            ShredError::Numerical(_) | ShredError::NotConverged { .. } | ShredError::NotPositiveDefinite | ShredError::TooManyFailures { .. } => 3,
            _ => 2,
        }
    }
}
