use std::io;

use thiserror::Error;

/// Errors produced by the index, stores and benchmark harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("duplicate id {0}")]
    DuplicateId(u64),

    #[error("unknown id {0}")]
    UnknownId(u64),

    #[error("store is closed")]
    StoreClosed,

    #[error("time regression: requested {requested}, already drained to {drained}")]
    TimeRegression { requested: i64, drained: i64 },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported format version {found} (expected {expected})")]
    FormatVersionMismatch { found: u32, expected: u32 },

    #[error("corpus line {line}: {message}")]
    Corpus { line: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
