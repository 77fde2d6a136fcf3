use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("time {t} outside [0, {duration}]")]
    TimeOutOfRange { t: f64, duration: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not converge at step {step} (defect {defect:.3e})")]
    QuadratureNotConverged { step: usize, defect: f64 },

    #[error("coefficient table does not match: {0}")]
    TableMismatch(String),

    #[error("{what} did not converge within budget (last change {last_change:.3e})")]
    NotConverged { what: &'static str, last_change: f64 },

    #[error("eigendecomposition failed")]
    EigenFailure,

    #[error("cache error: {0}")]
    Cache(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
