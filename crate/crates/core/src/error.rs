use thiserror::Error;

/// Errors raised by the clustering toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("point set is empty")]
    EmptyPointSet,
    #[error("basis columns are not orthonormal (max |UᵀU - I| = {0:e})")]
    NotOrthonormal(f64),
    #[error("non-finite entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("column {0} is identically zero and cannot be normalized")]
    ZeroColumn(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("construction infeasible: {0}")]
    Infeasible(String),
    #[error("enumeration budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("malformed input: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
