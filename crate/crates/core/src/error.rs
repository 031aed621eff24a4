use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("{path}: line {line}: {msg}")]
    Row {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("non-finite value at epoch {epoch}: {what}")]
    NonFinite { epoch: usize, what: String },

    #[error("stale cache: {0}")]
    StaleCache(String),

    #[error("undefined normalization: reference data is constant")]
    UndefinedNormalization,

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("duplicate run key: {0}")]
    DuplicateRun(String),

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
