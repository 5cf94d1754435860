use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sphere enumeration would produce {count} points, above the budget of {budget}; reduce lambda or the dimension")]
    Capacity { count: u128, budget: u64 },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("the sphere of squared radius {lambda} in dimension {dim} has no lattice points")]
    EmptySphere { dim: usize, lambda: u64 },

    #[error("padding violation: truncate mode needs pad >= {required}, grid has {available}")]
    Padding { required: usize, available: usize },

    #[error("divisibility chain violated: {0}")]
    Divisibility(String),

    #[error("cutoff degenerate: L = {l} is below the modulus q = {q}")]
    DegenerateCutoff { l: f64, q: String },

    #[error("a and q must be coprime (a = {a}, q = {q})")]
    NotCoprime { a: u64, q: u64 },

    #[error("empty point set")]
    EmptySet,

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by the caller's parameters or input data, as
    /// opposed to failures while computing.
    pub fn is_usage(&self) -> bool {
        !matches!(self, Error::Sampling(_) | Error::Io(_))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
