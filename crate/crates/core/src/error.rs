use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the sampling, prediction, and solver routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("exact predictions require even N (got N = {0}); use a Monte Carlo route for odd N")]
    OddDimension(usize),

    #[error("exceptional antisymmetric case: tau = {tau} is at the excluded value -1")]
    ExceptionalAntisymmetric { tau: f64 },

    #[error("exceptional case b^2 + tau = {value}: the parameter B is undefined")]
    ExceptionalBUndefined { value: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
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

    /// True for errors that stem from the numerical routines rather than from
    /// the caller's parameters.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
