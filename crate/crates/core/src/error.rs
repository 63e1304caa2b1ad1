use thiserror::Error;

use crate::wong::Trajectory;

/// Errors raised by the geometry kernels, integrators and the scenario runner.
#[derive(Debug, Error)]
pub enum KkError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("{what} is singular or not positive definite at x = {point:?}")]
    Singular { what: &'static str, point: Vec<f64> },

    #[error("point outside the chart domain: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("adaptive step underflow at t = {t}")]
    StepUnderflow { t: f64, partial: Box<Trajectory> },

    #[error("energy increased at flow step {step}: {before} -> {after}")]
    Instability { step: usize, before: f64, after: f64 },

    #[error("non-finite value produced: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, KkError>;

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(KkError::Dimension {
            context,
            expected,
            got,
        })
    }
}
