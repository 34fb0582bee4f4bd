use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("qubit count {n} exceeds the supported maximum of {max}")]
    DimensionOverflow { n: usize, max: usize },
    #[error("qubit count must be at least 1")]
    NoQubits,
    #[error("qubit index {j} out of range 1..={n}")]
    QubitIndex { j: usize, n: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("state is not positive semidefinite (minimum eigenvalue {0:e})")]
    NotPositive(f64),
    #[error("state is not pure (purity {0})")]
    ImpureState(f64),
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("invalid step size dt={dt} for t={t}")]
    StepSize { dt: f64, t: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unsupported combination: {0}")]
    Unsupported(String),
    #[error("noise record, line {line}: {msg}")]
    RecordParse { line: usize, msg: String },
}
