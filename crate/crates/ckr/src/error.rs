//! Crate-wide error type.

use thiserror::Error;

/// Errors for kernel evaluation, spectral analysis, solving and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point {index} is off the unit sphere (|norm - 1| = {deviation:.3e} > 1e-9)")]
    OffSphere { index: usize, deviation: f64 },

    #[error("composed kernel denominator {denom:.3e} below 1e-12; input numerically degenerate")]
    DegenerateDenominator { denom: f64 },

    #[error("invalid parameter {name}: {value} ({constraint})")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },

    #[error("label {value} at row {index} outside [0,1]")]
    LabelOutOfRange { index: usize, value: f64 },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("singular system in {context}")]
    SingularSystem { context: &'static str },

    #[error("SVD failed in {context}")]
    SvdFailure { context: &'static str },

    #[error("bisection did not converge after {iterations} iterations (ill-conditioned system)")]
    BisectionDidNotConverge { iterations: usize },

    #[error("decay profile unusable: {why}")]
    ProfileUnusable { why: &'static str },

    #[error("generalization bound inapplicable: k = {k} exceeds m/2 = {half_m}")]
    BoundInapplicable { k: f64, half_m: f64 },

    #[error("compression larger than sample: k = {k:.1} > m/2 = {half_m:.1}")]
    CompressionTooLarge { k: f64, half_m: f64 },

    #[error("sketch was built from a different Gram matrix (fingerprint mismatch)")]
    SketchMismatch,

    #[error("parameter schedule underflowed to zero for {name} (B too large for this precision)")]
    ScheduleUnderflow { name: &'static str },

    #[error("malformed input at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
