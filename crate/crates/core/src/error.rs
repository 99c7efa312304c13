use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong while building, training or analysing a
/// reservoir.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("numerical divergence at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:e})")]
    FixedPointNonConvergence { iterations: usize, residual: f64 },

    #[error("eigensolver failed to converge on a {n}x{n} matrix (Frobenius norm {frobenius_norm:e})")]
    EigenNonConvergence { n: usize, frobenius_norm: f64 },

    #[error("firing rates are degenerate (|r|^2 = {norm_sq:e}); the network is silent")]
    DegenerateRates { norm_sq: f64 },

    #[error("insufficient history: need at least {required} rows, got {actual}")]
    InsufficientHistory { required: usize, actual: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("component index {index} out of range 1..={n}")]
    ComponentOutOfRange { index: usize, n: usize },

    #[error("spectra have different sizes ({left} vs {right})")]
    SpectrumSizeMismatch { left: usize, right: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A run failed part-way; `partial` holds everything recorded so far.
    #[error("run aborted at step {}: {source}", partial.final_step)]
    RunAborted {
        #[source]
        source: Box<Error>,
        partial: Box<crate::experiment::ExperimentResult>,
    },

    #[error("serialization error: {0}")]
    Serialization(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn ensure_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}
