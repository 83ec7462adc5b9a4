//! Crate-wide error type.
//!
//! Validation failures (bad grids, bad pulse parameters, malformed files,
//! unusable fit data) and numerical failures (diverging field integration)
//! are kept apart so the command-line frontend can map them to distinct
//! exit codes.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid pulse: {0}")]
    InvalidPulse(String),

    /// The requested pulse does not fit on the time grid; `lost_fraction`
    /// is the fraction of its energy falling outside the axis.
    #[error("pulse truncated by the time grid ({lost_fraction:.3e} of its energy lies outside)")]
    TruncatedPulse { lost_fraction: f64 },

    #[error("invalid hole profile: {0}")]
    InvalidProfile(String),

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Data that cannot constrain the requested fit (flat traces, missing
    /// coverage of the feature, no usable points).
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// The optimizer gave up. `best` holds the best parameter vector seen,
    /// so callers can still inspect how far it got.
    #[error("fit did not converge after {iterations} iterations (residual norm {residual_norm:.3e})")]
    FitDidNotConverge {
        iterations: usize,
        residual_norm: f64,
        best: Vec<f64>,
    },

    /// The field integration produced a non-finite value. The index is the
    /// last time sample at which the output was still finite.
    #[error("numerical divergence: field became non-finite after time index {last_stable_index}")]
    Divergence { last_stable_index: usize },

    /// Parse failure in a config or CSV file, with a 1-based line number.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("spectral axis too narrow: {0}")]
    NarrowAxis(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for configuration or validation
    /// problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Divergence { .. } | Error::FitDidNotConverge { .. } => 3,
            _ => 2,
        }
    }
}
