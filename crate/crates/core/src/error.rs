use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid step law: {0}")]
    InvalidStepLaw(String),

    #[error("{name}={value} outside {constraint}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        constraint: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("window must start at the current step {current}, got {requested}")]
    WindowMismatch { requested: u64, current: u64 },

    #[error("no energy recorded at step {0}")]
    MissingCheckpoint(u64),

    #[error("charge environment holds {available} charges, {needed} required")]
    EnvironmentTooShort { needed: usize, available: usize },

    #[error("oracle table reaches m={available}, m={needed} required")]
    TableTooShallow { needed: usize, available: usize },

    #[error(
        "convolution box for max_m={requested} needs {bytes} bytes, budget is {budget}; feasible max_m={feasible}"
    )]
    MemoryBudget {
        requested: usize,
        bytes: u128,
        budget: u128,
        feasible: usize,
    },

    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("empty sample")]
    EmptySample,

    #[error("degenerate ensemble: {0}")]
    Degenerate(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

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
