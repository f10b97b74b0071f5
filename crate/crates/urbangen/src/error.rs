use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type.
///
/// Variants are grouped so the CLI can map them onto its exit codes:
/// validation failures (1), missing inputs (2), numerical failures (3).
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at {path}: {detail}")]
    Parse { path: PathBuf, detail: String },
    #[error("missing input: {0}")]
    MissingInput(PathBuf),
    #[error("out of range: {0}")]
    Range(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("training diverged at step {step}: loss {loss:.6e} exceeded 10x initial {initial:.6e} for {streak} consecutive steps")]
    Divergence {
        step: usize,
        loss: f64,
        initial: f64,
        streak: usize,
    },
    #[error("http request failed after {attempts} attempts: {detail}")]
    Http { attempts: u32, detail: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            detail: detail.into(),
        }
    }

    /// Exit code for the CLI: 1 validation, 2 missing input, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MissingInput(_) | Error::Io { .. } => 2,
            Error::Numerical(_) | Error::Divergence { .. } => 3,
            _ => 1,
        }
    }
}
