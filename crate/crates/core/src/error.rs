use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid data in {context}: {message}")]
    InvalidData { context: String, message: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("target undefined: {0}")]
    TargetUndefined(String),

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("zero vector has no direction; cosine similarity is undefined")]
    ZeroVector,

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{count} instance(s) missing from the embedding store, e.g. {}", .sample.join(", "))]
    MissingEmbeddings { count: usize, sample: Vec<String> },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("non-finite training loss at epoch {epoch}, batch {batch}: {loss}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid_data(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidData {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }
}
