use thiserror::Error;

/// Errors raised by the numerical core and the inference pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Cholesky factorization hit a non-positive pivot.
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    /// A feature column has zero variance and cannot be standardized.
    #[error("feature column {column} has zero variance")]
    DegenerateFeature { column: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Non-finite or out-of-range values in user data.
    #[error("data error: {0}")]
    Data(String),

    /// A construction that should be valid by design failed numerically.
    #[error("internal construction error: {0}")]
    Construction(String),

    /// Every bootstrap of an aggregation run failed.
    #[error("pipeline error: {0}")]
    Pipeline(String),
}

pub type Result<T> = std::result::Result<T, Error>;
