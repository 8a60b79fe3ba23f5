use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not positive definite (max jitter {max_jitter:e} tried)")]
    NotPositiveDefinite { max_jitter: f64 },

    #[error("task {task}: {source}")]
    InTask {
        task: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("graph error: {0}")]
    Graph(String),

    #[error("non-finite gradient at coordinate {0}")]
    NonFiniteGradient(usize),

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("degenerate predictive variance at point {0}")]
    DegenerateVariance(usize),

    #[error("point is not in the finite domain")]
    NotInDomain,

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unknown dataset id {0}")]
    UnknownDatasetId(u32),

    #[error("meta-training diverged: {0}")]
    Diverged(String),

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub(crate) fn in_task(self, task: usize) -> Self {
        Error::InTask {
            task,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
