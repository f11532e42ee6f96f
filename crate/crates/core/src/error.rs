use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty vector")]
    EmptyVector,

    #[error("empty sequence")]
    EmptySequence,

    #[error("{op}: shape mismatch, expected {expected}, got {actual}")]
    Shape {
        op: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid range: lo ({lo}) must be below hi ({hi})")]
    InvalidRange { lo: f64, hi: f64 },

    #[error("{field}: {reason}")]
    Config { field: String, reason: String },

    #[error("unknown gate variant {0:?}; expected one of: --, C-, O-, U-, -R, OM, UM, OR, UR")]
    UnknownVariant(String),

    #[error("variant {variant}: missing {what} pre-activation")]
    MissingPreactivation { variant: &'static str, what: &'static str },

    #[error("{cell} cell does not support variant {variant}")]
    UnsupportedVariant { cell: &'static str, variant: &'static str },

    #[error("gate value {g} outside admissible band [{lo}, {hi}] for f = {f}")]
    OutsideBand { f: f64, g: f64, lo: f64, hi: f64 },

    #[error("infinite timescale")]
    InfiniteTimescale,

    #[error("diverged at step {step}: loss is {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("empty mask: no scored steps")]
    EmptyMask,

    #[error("cache does not match cell: {0}")]
    CacheMismatch(String),

    #[error("{path}: {reason} (byte offset {offset})")]
    Format {
        path: PathBuf,
        offset: u64,
        reason: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            op,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
