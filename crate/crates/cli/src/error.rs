use std::path::PathBuf;

use entropot_core::OtError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed input: {0}")]
    Format(String),
    #[error("invalid arguments: {0}")]
    Usage(String),
    #[error("exact solver failed: {0}")]
    Oracle(String),
    #[error("{failures} invariant violation(s) detected; see {report}")]
    Invariants { failures: usize, report: PathBuf },
    #[error(transparent)]
    Solver(OtError),
}

impl From<OtError> for BenchError {
    fn from(e: OtError) -> Self {
        match e {
            OtError::Oracle(msg) => BenchError::Oracle(msg),
            e @ OtError::ReferenceNotConverged { .. } => BenchError::Oracle(e.to_string()),
            e => BenchError::Solver(e),
        }
    }
}

impl From<csv::Error> for BenchError {
    fn from(e: csv::Error) -> Self {
        BenchError::Format(e.to_string())
    }
}

impl BenchError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BenchError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for invariant violations, 3 for I/O and format problems, 4 for the exact solver.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Invariants { .. } => 2,
            BenchError::Io { .. } | BenchError::Format(_) | BenchError::Usage(_) => 3,
            BenchError::Oracle(_) => 4,
            BenchError::Solver(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
