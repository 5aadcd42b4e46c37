use alloc::string::String;

/// Errors raised by the numerical kernels, models, network engine and
/// training loop.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("matrix is singular")]
    Singular,
    #[error("argument outside the function domain: {0}")]
    Domain(String),
    #[error("impossible transition {from} -> {to} (probability {probability:e})")]
    ImpossibleTransition { from: u32, to: u32, probability: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("backward called without a cached forward pass")]
    NoCachedForward,
    #[error("unknown size label {label:?} for {case}")]
    UnknownSizeLabel { case: &'static str, label: String },
    #[error("finite-difference step calibration failed after {batches} batches")]
    CalibrationFailed { batches: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
