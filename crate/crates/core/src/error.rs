use alloc::string::String;

/// Errors raised by the verification algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("too short: {samples} samples, need at least {needed} for one window")]
    TooShort { samples: usize, needed: usize },
    #[error("insufficient frames: {frames} (need at least {needed})")]
    InsufficientFrames { frames: usize, needed: usize },
    #[error("empty utterance{}", if .0.is_empty() { String::new() } else { alloc::format!(" {}", .0) })]
    EmptyUtterance(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("singular posterior precision for utterance {0}")]
    SingularPrecision(String),
    #[error("statistics were accumulated against a different UBM (expected {expected:016x}, found {found:016x})")]
    UbmMismatch { expected: u64, found: u64 },
    #[error("degenerate i-vector")]
    DegenerateIVector,
    #[error("between-class covariance undefined: {0} class(es)")]
    SingleClass(usize),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },
    #[error("transfer mode requires a pretrained network")]
    MissingPretrained,
    #[error("trial lists differ at position {index}: expected {expected}, found {found}")]
    TrialMismatch {
        index: usize,
        expected: String,
        found: String,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("non-finite score for trial {0}")]
    NonFiniteScore(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = core::result::Result<T, Error>;
