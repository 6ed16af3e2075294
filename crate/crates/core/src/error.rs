use thiserror::Error;

/// Errors produced by the flowopt library.
#[derive(Debug, Error)]
pub enum Error {
    /// A text input (topology, model or dataset file) could not be parsed.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("link {link}: flow {flow} kbps is not below capacity {capacity} kbps")]
    InfeasibleFlow {
        link: usize,
        flow: f64,
        capacity: f64,
    },

    #[error("link {link}: negative flow {flow} kbps")]
    NegativeFlow { link: usize, flow: f64 },

    #[error("average delay is undefined for zero total flow")]
    UndefinedDelay,

    #[error("{0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unsupported model file version: {0:?}")]
    ModelVersion(String),

    #[error("malformed model file: {0}")]
    MalformedModel(String),

    #[error("dataset schema error: {0}")]
    Schema(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
