//! Crate-wide error type with the machine-readable categories the CLI maps
//! to exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or input value; names the offending field.
    #[error("{field}: {reason}")]
    Config { field: String, reason: String },

    /// Request exceeds a configured capacity cap (branch count, step cap).
    #[error("{0}")]
    Capacity(String),

    /// A forced measurement record has vanishing amplitude.
    #[error("outcome at step {step} has conditional probability {prob:.3e} < {threshold:.0e}")]
    ImpossibleOutcome {
        step: usize,
        prob: f64,
        threshold: f64,
    },

    /// Number-basis truncation is insufficient for the requested state.
    #[error("{0}")]
    Truncation(String),

    /// Numerical failure (degenerate norm, eigensolver breakdown, ...).
    #[error("{0}")]
    Numerical(String),

    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Category keyword used in CLI error reports.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config { .. } | Error::Io(_) => "config",
            Error::Capacity(_) => "capacity",
            Error::ImpossibleOutcome { .. } => "impossible-outcome",
            Error::Truncation(_) => "truncation",
            Error::Numerical(_) => "numerical",
        }
    }

    /// Process exit code for the category.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Io(_) => 2,
            Error::Capacity(_) => 3,
            Error::ImpossibleOutcome { .. } => 4,
            Error::Truncation(_) => 5,
            Error::Numerical(_) => 6,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
