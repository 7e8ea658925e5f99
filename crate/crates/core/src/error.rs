use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse failure category, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Validation,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: expected {expected} values, found {found}")]
    RaggedRow {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}:{line}: cannot parse `{token}` as a number")]
    NonNumeric {
        path: PathBuf,
        line: usize,
        token: String,
    },
    #[error("{path}:{line}: inconsistent separator")]
    MixedSeparators { path: PathBuf, line: usize },
    #[error("{path}: no data rows")]
    EmptyFile { path: PathBuf },
    #[error("dataset needs at least 2 classes, found {0}")]
    TooFewClasses(usize),
    #[error("label `{0}` does not occur in the reference class list")]
    UnknownLabel(String),
    #[error("class `{class}` has {count} instance(s); stratified split needs at least 2")]
    Stratification { class: String, count: usize },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::NonFinite(_) | Error::Numerical(_) => ErrorKind::Numerical,
            _ => ErrorKind::Validation,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
