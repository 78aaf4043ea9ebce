//! Error type shared by every module of the crate.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Inputs of different dimensionality were combined.
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// A precondition of an operation does not hold.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Not enough data points to run the requested fit.
    #[error("insufficient data: need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    /// The curve shows no growth above its initial coverage, so a saturation
    /// model cannot be identified.
    #[error("insufficient signal: {0}")]
    InsufficientSignal(String),

    /// A fit did not produce a finite model from any start.
    #[error("fit failed: {0}")]
    FitFailed(String),

    /// More than half of the bootstrap replicates failed.
    #[error("bootstrap failed: {failed} of {replicates} replicates could not be fitted")]
    BootstrapFailed { failed: usize, replicates: usize },

    /// A value lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested coverage cannot be reached by the model.
    #[error("unreachable target: {0}")]
    Unreachable(String),

    /// An interpolation query fell outside the measured range.
    #[error("extrapolation below measured range: query {query}, smallest sample {min}")]
    Extrapolation { query: u64, min: u64 },

    /// A scenario generator failed while fitting a meta model.
    #[error("generator failed at input count {input_count}: {message}")]
    Generator { input_count: u64, message: String },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
