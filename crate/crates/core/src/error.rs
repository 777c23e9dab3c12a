use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("horizon too small: {0}")]
    HorizonTooSmall(String),
    #[error("fixed point did not converge: {0}")]
    NonConvergence(String),
    #[error("expected event count {expected:.3e} exceeds the cap {cap}")]
    MemoryCap { expected: f64, cap: usize },
    #[error("unsupported kernel: {0}")]
    UnsupportedKernel(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("step count {0} is below the minimum of 256")]
    TooFewSteps(usize),
    #[error("covariance embedding failed: {0}")]
    Embedding(String),
    #[error("series too short: {0}")]
    Length(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("empty input: {0}")]
    EmptyFile(String),
    #[error("bin alignment: {0}")]
    Alignment(String),
    #[error("insufficient paths: {0}")]
    InsufficientPaths(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
