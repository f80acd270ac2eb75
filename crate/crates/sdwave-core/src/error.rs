// SPDX-License-Identifier: Apache-2.0

//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A numeric argument is outside its admissible range.
    #[error("invalid argument `{arg}`: {reason}")]
    InvalidArgument {
        /// Name of the offending argument.
        arg: &'static str,
        /// Human-readable explanation.
        reason: String,
    },

    /// Two objects that must share a discretization do not.
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        /// Where the mismatch was detected.
        context: &'static str,
        /// Expected length.
        expected: usize,
        /// Actual length.
        found: usize,
    },

    /// The implicit diagonal coefficient of a trapezoidal Volterra step vanished.
    #[error("implicit Volterra step degenerate for mode {mode}: coefficient {coefficient:e}")]
    DegenerateStep {
        /// One-based mode index.
        mode: usize,
        /// The offending coefficient `1 - dt/2 * N(0)`.
        coefficient: f64,
    },

    /// A state does not belong to the discrete domain of the generator.
    #[error("state outside the discrete generator domain: {0}")]
    NotInDomain(String),

    /// A dense factorization failed.
    #[error("factorization failed: {0}")]
    Factorization(String),
}

/// Convenience alias.
pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(arg: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument {
        arg,
        reason: reason.into(),
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
