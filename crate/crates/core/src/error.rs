use thiserror::Error;

/// Errors raised by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("field grid {found} does not match expected grid {expected}")]
    GridMismatch { expected: String, found: String },

    #[error("domain has no non-exterior cells")]
    EmptyDomain,

    #[error("profile slope {slope} between columns {col} and {next} exceeds kappa = {kappa}", next = col + 1)]
    SlopeViolation { col: usize, slope: f64, kappa: f64 },

    #[error("matrix at cell {cell} is not symmetric (off-diagonal gap {gap:e})")]
    NotSymmetric { cell: usize, gap: f64 },

    #[error("matrix at cell {cell} is not positive definite (min eigenvalue {min_eig:e})")]
    NotPositiveDefinite { cell: usize, min_eig: f64 },

    #[error("non-finite value at cell {cell}")]
    NonFinite { cell: usize },

    #[error("average over an empty cell set")]
    EmptyCellSet,

    #[error("boundary constraint violated at cell {cell}: w = {value}, g = {expected}")]
    BoundaryMismatch { cell: usize, value: f64, expected: f64 },

    #[error("invalid sigma function: {0}")]
    InvalidSigma(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("malformed csv: {0}")]
    Csv(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
