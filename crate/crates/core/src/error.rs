use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AcgpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("triangular factor is singular at index {index}")]
    SingularTriangular { index: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = AcgpError> = std::result::Result<T, E>;
