use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("line {line}: duplicate token '{token}'")]
    DuplicateToken { token: String, line: usize },

    #[error("line {line}: non-finite value for token '{token}'")]
    NonFinite { token: String, line: usize },

    #[error("token '{0}' has a zero-norm vector")]
    ZeroNorm(String),

    #[error("embedding space is empty")]
    EmptySpace,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("tokens missing from vocabulary: {}", .0.join(", "))]
    MissingTokens(Vec<String>),

    #[error("unknown token '{0}'")]
    UnknownToken(String),

    #[error("shared vocabulary has {available} words, {requested} requested")]
    InsufficientOverlap { requested: usize, available: usize },

    #[error("dictionary is empty")]
    EmptyDictionary,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("corpus is empty after filtering")]
    EmptyCorpus,

    #[error("orthogonality drift: |W W^T - I|_F = {0:.3e}")]
    OrthogonalityDrift(f64),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            line,
            message: message.into(),
        }
    }
}
