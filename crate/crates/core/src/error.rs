//! Error type shared by every module.

use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Dimension outside the supported range.
    #[error("invalid dimension {got}: {reason}")]
    InvalidDimension { got: usize, reason: &'static str },

    /// Two operands with incompatible sizes.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Generator label outside `1..=m`.
    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    /// Input violates a documented precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A hypothesis check failed.
    #[error("hypothesis {name} violated: worst margin {margin:e}")]
    Hypothesis { name: &'static str, margin: f64 },

    /// Numerical degeneracy (singular system, vanishing ray, failed bracket).
    #[error("degenerate: {0}")]
    Degenerate(String),

    /// Iterative method stopped before reaching its tolerance.
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// Invalid user-facing parameter.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Result alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
