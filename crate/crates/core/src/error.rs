use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Arguments or data violate a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration key failed validation; `key` is the dotted path.
    #[error("invalid config value at `{key}`: {reason}")]
    Config { key: String, reason: String },

    /// Iterative numerics did not produce a usable answer.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The enumeration of kernel multiplets would exceed its budget.
    #[error("kernel enumeration needs {required} multiplets, budget is {budget}")]
    KernelBudget { required: u128, budget: u64 },

    #[error("parse error in {path}:{line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config { key: key.into(), reason: reason.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code used by the CLI: 2 for bad input, 3 for numerical
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) => 3,
            _ => 2,
        }
    }
}
