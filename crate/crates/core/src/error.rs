use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network layout: {0}")]
    InvalidLayout(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("unsupported problem: {0}")]
    UnsupportedProblem(String),
    #[error("problem `{0}` has no analytic solution")]
    MissingAnalytic(String),
    #[error("singular tridiagonal system at row {0}")]
    SingularSystem(usize),
    #[error("relaxation did not converge after {iterations} sweeps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("training aborted at iteration {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String },
    #[error("invalid value for `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
