//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("column {0:?} not found in header")]
    MissingColumn(String),

    #[error("non-numeric value {value:?} in column {column:?}, row {row}")]
    NonNumericCell {
        column: String,
        row: usize,
        value: String,
    },

    #[error("binomial response must be 0 or 1, got {value} in row {row}")]
    InvalidBinaryResponse { row: usize, value: f64 },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("column {0:?} is constant; cannot scale")]
    ConstantColumn(String),

    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("rank-deficient submatrix for support of size {0}")]
    RankDeficient(usize),

    #[error("IRLS did not converge after {0} iterations")]
    IrlsNonConvergence(usize),

    #[error("invalid tuning sequence: {0}")]
    InvalidLambda(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown method {0:?}")]
    UnknownMethod(String),

    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("cross-validation failed: {0}")]
    CvFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;
