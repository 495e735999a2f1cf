use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cannot parse `{input}`: {reason}")]
    Parse { input: String, reason: String },

    #[error("search bracket does not intersect the eta domain")]
    EmptyDomain,

    #[error("eta update is not monotone in |w| near w = {at}")]
    NonMonotoneUpdate { at: f64 },

    #[error("adaptive quadrature exceeded depth {max_depth} on [{lo}, {hi}]")]
    DepthExceeded { lo: f64, hi: f64, max_depth: usize },

    #[error("mask has zero variance; reparameterized eta is infinite")]
    DegenerateMask,

    #[error("design is not standardized: column {column} has mean square {value}")]
    NotStandardized { column: usize, value: f64 },

    #[error("column {0} has zero root-mean-square")]
    ZeroColumn(usize),

    #[error("regularized normal matrix is singular")]
    SingularSystem,

    #[error("method `{0}` has no scalar effective penalty")]
    ScalarUnsupported(String),

    #[error("a <-> eta inversion failed: {0}")]
    InversionFailed(String),

    #[error("invalid combination: {0}")]
    InvalidCombination(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn parse(input: &str, reason: impl Into<String>) -> Self {
        Error::Parse {
            input: input.to_string(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
