use thiserror::Error;

/// Errors produced by the inference engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("kernel {family} does not admit derivatives of order {order}")]
    UnsupportedSmoothness { family: &'static str, order: usize },

    #[error("analytic shortcut requires the squared-exponential kernel, got {0}")]
    WrongFamily(&'static str),

    #[error("covariance matrix of size {size} is not positive definite after jitter {jitter:e}")]
    SingularCovariance { size: usize, jitter: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("curve has fewer than two usable points")]
    EmptyCurve,

    #[error("curve points are all coincident")]
    DegenerateCurve,

    #[error("no samples supplied")]
    EmptySamples,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("duplicate location at rows {first} and {second}")]
    DuplicateLocation { first: usize, second: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable short name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::UnsupportedSmoothness { .. } => "unsupported_smoothness",
            Error::WrongFamily(_) => "wrong_family",
            Error::SingularCovariance { .. } => "singular_covariance",
            Error::Config(_) => "config",
            Error::EmptyCurve => "empty_curve",
            Error::DegenerateCurve => "degenerate_curve",
            Error::EmptySamples => "empty_samples",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::Parse { .. } => "parse",
            Error::DuplicateLocation { .. } => "duplicate_location",
            Error::Io(_) => "io",
        }
    }
}
