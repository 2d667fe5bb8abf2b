use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid truncation: {0}")]
    InvalidTruncation(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("field has {0} missing entries")]
    MissingEntries(usize),
    #[error("sine component requested for self-conjugate wavenumber ({0}, {1})")]
    SineOfSelfConjugate(i64, i64),
    #[error("matrix is not square: {0}x{1}")]
    NotSquare(usize, usize),
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("value {value} at ({row}, {col}) outside bounds [{lo}, {hi}]")]
    OutOfBounds {
        value: f64,
        row: usize,
        col: usize,
        lo: f64,
        hi: f64,
    },
    #[error("timestamp {0} is not aligned to the cadence")]
    Misaligned(String),
    #[error("divergence: {0}")]
    Divergence(String),
    #[error("no data: {0}")]
    EmptyData(String),
    #[error("simulation unstable: {0}")]
    Unstable(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
