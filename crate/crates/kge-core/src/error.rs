//! Crate-wide error type.
//!
//! Recoverable conditions (bad files, bad configs, aborted training runs)
//! surface as [`Error`]. Programming contracts — dimension mismatches,
//! calling a score function with inconsistent arguments — panic instead,
//! the same way slice indexing does.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A line could not be tokenized at all.
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// A line parsed but referenced types unknown to the schema.
    #[error("schema error at {path}:{line}: {msg}")]
    Schema {
        path: String,
        line: usize,
        msg: String,
    },

    /// Invalid configuration (counts, fractions, missing edge types, ...).
    #[error("config error: {0}")]
    Config(String),

    /// Training aborted; any checkpoint written at cadence is retained.
    #[error("training fault: {0}")]
    Training(String),

    /// Checkpoint file is malformed or does not match the store.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Metric is undefined for the given input (e.g. single-class AUC).
    #[error("metric error: {0}")]
    Metric(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl std::fmt::Display, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
