use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error, line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dimension mismatch, line {line}: expected {expected} components, found {found}")]
    DimensionMismatch { line: usize, expected: usize, found: usize },

    #[error("confidence out of range, line {line}")]
    ConfidenceOutOfRange { line: usize, value: f64 },

    #[error("duplicate id `{id}`, line {line}")]
    DuplicateId { line: usize, id: String },

    #[error("duplicate token `{token}`, line {line}")]
    DuplicateToken { line: usize, token: String },

    #[error("ragged row, line {line}: expected {expected} components, found {found}")]
    RaggedRow { line: usize, expected: usize, found: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("label {label} is out of range for {class_count} classes")]
    LabelOutOfRange { label: usize, class_count: usize },

    #[error("label {0} does not occur in the record set")]
    LabelAbsent(usize),

    #[error("missing external coordinate for record `{0}`")]
    MissingCoordinate(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("requested {k} neighbours from a multiset of {n} points")]
    TooManyNeighbours { k: usize, n: usize },

    #[error("no ranking available for label {0}")]
    NoRanking(usize),

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("model query failed: {0}")]
    Model(String),

    #[error("linear solve failed: {0}")]
    Solve(String),

    #[error("serialization error: {0}")]
    Serialize(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
