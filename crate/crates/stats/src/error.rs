use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("empty input")]
    Empty,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("test undefined: {0}")]
    Undefined(String),
    #[error("sample size {n} outside {min}..={max}")]
    Size { n: usize, min: usize, max: usize },
    #[error("sample has zero variance")]
    ZeroVariance,
    #[error("non-finite value in input")]
    NonFinite,
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, StatsError>;
