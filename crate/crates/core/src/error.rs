use thiserror::Error;

/// Errors raised by the pipeline. Variants are grouped so a caller can map
/// them onto configuration, validation and runtime failure classes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: field `{field}`: {message}")]
    Parse {
        line: u64,
        field: String,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("non-monotone RH curve in shot(s): {}", .0.join(", "))]
    NonMonotoneRh(Vec<String>),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("undefined index: green reflectance {green} must be positive")]
    UndefinedIndex { green: f64 },

    #[error("too few observations for harmonic fit: got {count}, need {required}")]
    TooFewPoints { count: usize, required: usize },

    #[error("degenerate harmonic design: {0}")]
    Rank(String),

    #[error("insufficient clear observations for band {band}: {count} < {required}")]
    InsufficientObservations {
        band: &'static str,
        count: usize,
        required: usize,
    },

    #[error("training error: {0}")]
    Training(String),

    #[error("dimension mismatch: expected {expected} features, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("feature kind mismatch: expected {expected}, got {got}")]
    KindMismatch { expected: String, got: String },

    #[error("model format error: {0}")]
    Format(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("run error for months {months:?}: {message}")]
    Run { months: Vec<u32>, message: String },

    #[error("grid misalignment: {left} vs {right}")]
    Misaligned { left: String, right: String },

    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Broad failure class, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Validation,
    Runtime,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::KindMismatch { .. } => ErrorClass::Config,
            Error::Parse { .. }
            | Error::Validation(_)
            | Error::NonMonotoneRh(_)
            | Error::Dimension { .. }
            | Error::Format(_)
            | Error::Misaligned { .. }
            | Error::Length(..) => ErrorClass::Validation,
            _ => ErrorClass::Runtime,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
