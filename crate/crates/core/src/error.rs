use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Record { line: usize, message: String },

    #[error("duplicate case id {0:?}")]
    DuplicateId(String),

    #[error("unknown observation {0:?}")]
    UnknownObservation(String),

    #[error("invalid case {id:?}: {message}")]
    InvalidCase { id: String, message: String },

    #[error("attribute {0:?} is not present on any case")]
    UnknownAxis(String),

    #[error("invalid group spec: {0}")]
    InvalidGroupSpec(String),

    #[error("group {group} has {size} member(s); at least {required} required")]
    GroupTooSmall {
        group: String,
        size: usize,
        required: usize,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value at position {0}")]
    NonFinite(usize),

    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("reports are not comparable: {0}")]
    Incomparable(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("json: {0}")]
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

pub type Result<T, E = Error> = std::result::Result<T, E>;
