//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the mathematical domain of an operation
    /// (non-finite input, non-positive variance, label not in {-1,+1}, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Vector/matrix dimensions do not line up.
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// A per-element normalizer underflowed even after the log-domain shift.
    #[error("numerical degeneracy at element {index}: {what}")]
    Degenerate { index: usize, what: &'static str },

    /// The iterative engine produced a non-finite state.
    #[error("engine diverged (non-finite state) at iteration {iteration}")]
    Diverged { iteration: usize },

    /// An operation was called with the wrong side-information variant.
    #[error("usage error: {0}")]
    Usage(String),

    /// Experiment configuration is invalid or could not be parsed.
    #[error("config error: {0}")]
    Config(String),

    /// The adaptive quadrature oracle failed to converge.
    #[error("oracle quadrature did not converge: {0}")]
    Oracle(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

/// Checks that `x` is finite, otherwise reports a domain error naming `what`.
pub(crate) fn ensure_finite(x: f64, what: &str) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{what} must be finite, got {x}")))
    }
}

/// Checks that two slices have the same length.
pub(crate) fn ensure_same_len(a: usize, b: usize, what: &'static str) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected: a,
            got: b,
        })
    }
}
