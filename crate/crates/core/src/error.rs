use thiserror::Error;

use crate::frame::IterationRecord;

pub type Result<T> = std::result::Result<T, ScaleError>;

#[derive(Debug, Error)]
pub enum ScaleError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("factorization failed: {0}")]
    FactorizationFailure(String),

    #[error("matrix is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("margin set has zero gap while the error is nonzero")]
    DegenerateMargin,

    /// The outer loop exceeded its iteration budget. The trace collected so
    /// far is attached for diagnosis.
    #[error("iteration cap of {cap} exceeded")]
    IterationCapExceeded {
        cap: usize,
        trace: Box<Vec<IterationRecord>>,
    },

    #[error("Newton-Dinkelbach exceeded {cap} iterations")]
    NdIterationCap { cap: usize },

    #[error("derivative vanished at alpha = {alpha:e} (f' = {derivative:e})")]
    DerivativeVanished { alpha: f64, derivative: f64 },

    #[error("guess branch entered with h'(1) = {h_prime_one} >= 1/4")]
    GuessPreconditionViolated { h_prime_one: f64 },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("requested gain {gamma:e} exceeds the piecewise-linear supremum {supremum:e}")]
    InfeasibleSegment { gamma: f64, supremum: f64 },

    #[error("row {row} has zero scaled sum")]
    ZeroRowSum { row: usize },

    #[error("no perceptron instance converged within its iteration cap")]
    NotSeparable,
}
