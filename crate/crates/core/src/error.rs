//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by geometry construction, solution building, threshold
/// computation, and the Monte-Carlo estimators.
#[derive(Debug, Error)]
pub enum Error {
    /// An input was outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The full-solution measurement matrix is rank deficient.
    #[error("singular geometry: condition number {cond:.3e} exceeds {limit:.1e}")]
    SingularGeometry { cond: f64, limit: f64 },

    /// A sub-geometry (one satellite excluded) is rank deficient.
    #[error("singular sub-geometry excluding measurement {index}: condition number {cond:.3e}")]
    SingularSubgeometry { index: usize, cond: f64 },

    /// Inconsistent or invalid configuration.
    #[error("config error: {0}")]
    Config(String),

    /// The per-test false-alert allocation left no usable threshold.
    #[error("degenerate threshold: per-tail allocation {allocation:.3e} is not in (0, 0.5)")]
    DegenerateThreshold { allocation: f64 },

    /// The survivor population of the Monte-Carlo estimator reached zero.
    #[error("survivor population depleted at step {step}")]
    Depletion { step: usize },

    /// A moving average of zero makes the correction coefficient undefined.
    #[error("no exit events recorded up to step {step}; correction coefficient undefined")]
    Starvation { step: usize },

    /// Numerical integration failed to reach the requested tolerance.
    #[error("quadrature failure: {0}")]
    Quadrature(String),

    /// A geometry or budget file could not be parsed.
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// An operation received an empty input collection.
    #[error("empty input: {0}")]
    Empty(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
