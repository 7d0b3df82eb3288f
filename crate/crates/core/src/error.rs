use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("column {0} has (near) zero norm")]
    ZeroColumn(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("jacobi iteration did not converge after {0} sweeps")]
    NotConverged(usize),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("instance {instance} column {column} has norm {norm}, expected 1")]
    NonUnitColumns {
        instance: usize,
        column: usize,
        norm: f64,
    },
    #[error("batch of {0} instances is too small (need at least 2)")]
    BatchTooSmall(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("anchor slot {anchor} out of range for k = {k}")]
    BadAnchor { anchor: usize, k: usize },
    #[error("cache does not match the network: {0}")]
    StaleCache(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid dataset configuration: {0}")]
    BadConfig(String),
    #[error("only one class present in labels")]
    SingleClass,
    #[error("invalid run configuration: {0}")]
    ConfigInvalid(String),
    #[error("i/o failure: {0}")]
    IoFailure(String),
    #[error("unknown suite `{0}`")]
    UnknownSuite(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::IoFailure(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::IoFailure(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::IoFailure(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
