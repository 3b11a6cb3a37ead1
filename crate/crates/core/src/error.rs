use std::path::PathBuf;

use thiserror::Error;

use crate::model::SiameseModel;
use crate::pyfunc::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    MalformedRecord { line: usize, message: String },

    #[error("line {line}: duplicate pair_id `{pair_id}`")]
    DuplicatePairId { line: usize, pair_id: String },

    #[error("line {line}: {source}")]
    FunctionParse {
        line: usize,
        #[source]
        source: ParseError,
    },

    #[error("referential integrity: {0}")]
    Integrity(String),

    #[error("not enough positive pairs: need {needed}, have {available} (short by {})", needed - available)]
    InsufficientPositives { needed: usize, available: usize },

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("component mask keeps nothing")]
    EmptyMask,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("cached forward pass is stale (parameters changed since it was computed)")]
    StaleCache,

    #[error("in-batch loss needs at least 2 examples, got {0}")]
    BatchTooSmall(usize),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("cosine similarity undefined for a zero vector")]
    ZeroVector,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("token id {id} outside vocabulary of size {size}")]
    UnknownTokenId { id: usize, size: usize },

    #[error("gold code `{code_id}` of query `{query_id}` is not in the codebase")]
    GoldMissing { query_id: String, code_id: String },

    #[error("non-finite {what}")]
    NonFinite { what: String },

    #[error("training diverged at epoch {epoch}, step {step}: {reason}")]
    Diverged {
        epoch: usize,
        step: usize,
        reason: String,
        /// Parameters as they were before the failing update.
        last_good: Box<SiameseModel>,
    },

    #[error("agreement undefined: {0}")]
    InsufficientData(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
