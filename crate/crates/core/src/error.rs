use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Two coupled pulls are too close for the pull matrix to be diagonalised.
    #[error("degenerate eigensystem: coupled pulls {a} and {b} differ by less than the relative gap {gap:e}")]
    DegenerateEigensystem { a: f64, b: f64, gap: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite result in {0}")]
    NonFiniteResult(String),

    #[error("system is not stationary (eigenvalue {0} has non-negative real part)")]
    NotStationary(f64),

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("every optimisation start produced a non-finite log-likelihood")]
    AllStartsFailed,

    #[error("importance sampling estimate is unstable (effective sample size {ess:.1} < {min})")]
    UnstableEstimate { ess: f64, min: f64 },

    #[error("category '{0}' contains no models")]
    EmptyCategory(String),

    #[error("categories do not partition the model table: {0}")]
    NotAPartition(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error at line {line}: {message}")]
    Validation { line: usize, message: String },

    #[error("duplicate forcing time {0}")]
    DuplicateTime(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
