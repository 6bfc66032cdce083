use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("row {0}: y_lower exceeds y_upper")]
    RowIntervalViolation(usize),
    #[error("row {0}: covariate dimension differs from the first row")]
    DimensionMismatch(usize),
    #[error("sample needs at least two rows")]
    TooFewRows,
    #[error("row {0}: non-finite value")]
    NonFinite(usize),
    #[error("direction grids are only built natively for 1 <= ell <= 3 (got {0})")]
    UnsupportedDimension(usize),
    #[error("grid size {m} too small for ell = {ell}")]
    GridTooSmall { ell: usize, m: usize },
    #[error("vector length {got} does not match dimension {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("direction is not a unit vector (norm {0})")]
    NonUnitDirection(f64),
    #[error("invalid kernel specification: {0}")]
    InvalidKernel(String),
    #[error("kernel moment system is singular")]
    MomentSystemSingular,
    #[error("index {index} out of range for sample of size {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("bandwidth must be positive and finite (got {0})")]
    InvalidBandwidth(f64),
    #[error("renormalization matrix is singular (condition number {0:e})")]
    SingularRenormalization(f64),
    #[error("support functions are defined on different grids")]
    GridMismatch,
    #[error("empty constraint set at v = {0}")]
    EmptyConstraintSet(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
