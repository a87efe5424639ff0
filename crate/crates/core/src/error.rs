use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, got {actual}")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{op}: vector of dim {dim} is not divisible into windows of {k}")]
    PoolWindow { op: &'static str, dim: usize, k: usize },

    #[error("index {index} out of range for {what} (size {size})")]
    IndexOutOfRange {
        what: String,
        index: usize,
        size: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("out-of-vocabulary {kind} `{token}`")]
    OutOfVocabulary { kind: &'static str, token: String },

    #[error("invalid date: {0}")]
    InvalidDate(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("quadruple with relation {relation} is already reciprocal (|R| = {num_relations})")]
    AlreadyAugmented {
        relation: usize,
        num_relations: usize,
    },

    #[error("missing filter entry for query (s={s}, p={p}, t={t})")]
    MissingFilterKey { s: usize, p: usize, t: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("checkpoint shape mismatch for tensor `{name}`: {message}")]
    CheckpointShape { name: String, message: String },

    #[error("vocabulary hash mismatch for {what}: checkpoint {expected}, dataset {actual}")]
    VocabMismatch {
        what: &'static str,
        expected: String,
        actual: String,
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

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
