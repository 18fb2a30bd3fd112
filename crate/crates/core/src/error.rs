use std::path::PathBuf;

/// Errors raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },
    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("empty matrix ({rows}x{cols})")]
    EmptyMatrix { rows: usize, cols: usize },
    #[error("Sylvester equation residual {residual:.3e} exceeds target {target:.3e}")]
    SingularPencil { residual: f64, target: f64 },
    #[error("normal equations are numerically singular (condition estimate {condition:.3e})")]
    SingularSystem { condition: f64 },
    #[error("soft threshold must be nonnegative, got {0}")]
    NegativeThreshold(f64),
    #[error("row QP Hessian entry {index} is not positive ({value})")]
    NonPositiveHessian { index: usize, value: f64 },
    #[error("row QP target sum {0} is negative")]
    InfeasibleTarget(f64),
    #[error("non-negative least squares did not terminate after {0} iterations")]
    NnlsStalled(usize),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("row {row} is not a label distribution: {reason}")]
    NotADistribution { row: usize, reason: String },
    #[error("invalid shape: {0}")]
    BadShape(String),
    #[error("missing rate {omega} exceeds the maximum {max} for m = {m}")]
    RateTooHigh { omega: f64, max: f64, m: usize },
    #[error("too few label columns with nonzero mean to define an imbalance ratio")]
    DegenerateColumn,
    #[error("need at least {needed} instances, found {found}")]
    TooFewInstances { needed: usize, found: usize },

    #[error("invalid hyperparameter {field}: {message}")]
    InvalidHyperparams { field: &'static str, message: String },
    #[error("numerical breakdown at iteration {iteration}: {quantity} is not finite")]
    NumericalBreakdown {
        iteration: usize,
        quantity: &'static str,
    },

    #[error("vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty distribution vector")]
    EmptyVector,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("config error in {field}: {message}")]
    Config { field: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors that stem from invalid user input or configuration.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config { .. }
                | Error::Parse { .. }
                | Error::ShapeMismatch(_)
                | Error::NotADistribution { .. }
                | Error::BadShape(_)
                | Error::RateTooHigh { .. }
                | Error::TooFewInstances { .. }
                | Error::InvalidHyperparams { .. }
                | Error::Io { .. }
                | Error::Json(_)
                | Error::DegenerateColumn
        )
    }

    /// True for failures of the numerical machinery during a fit.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NumericalBreakdown { .. }
                | Error::SingularPencil { .. }
                | Error::SingularSystem { .. }
                | Error::NnlsStalled(_)
                | Error::NonFinite { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
