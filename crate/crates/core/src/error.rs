//! Error type shared across the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument violated a precondition (bad probability, k out of range, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A value fell outside the mathematical domain of an operation
    /// (e.g. a point beyond the GPD support for negative shape).
    #[error("domain error: {0}")]
    Domain(String),

    /// The design matrix does not have full column rank on this data.
    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    /// An iterative solver ran out of iterations without meeting its tolerance.
    #[error("solver failed to converge after {iterations} iterations: {detail}")]
    Convergence { iterations: usize, detail: String },

    /// Bisection on the asymmetry level could not bracket the requested
    /// exceedance count.
    #[error("calibration failed: {0}")]
    Calibration(String),

    /// No observation exceeds the fitted threshold; nothing to fit.
    #[error("empty exceedance set: no observation lies above the threshold")]
    EmptyExceedances,

    /// All excesses are identical; the GPD likelihood is degenerate.
    #[error("degenerate exceedance set: {0}")]
    Degenerate(String),

    /// A problem with file contents (missing column, bad cell, no usable rows).
    #[error("data error: {0}")]
    Data(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}
