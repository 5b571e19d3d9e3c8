use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by parsing, configuration and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input, positioned at a 1-based line number.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A threshold, window or other parameter outside its valid range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A value that violates a domain invariant (e.g. a degenerate box).
    #[error("invalid value: {0}")]
    Invalid(String),

    /// A quantity that has no defined value for the given input.
    #[error("undefined: {0}")]
    Undefined(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("I/O error: {0}")]
    Stream(#[from] io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by bad user-supplied parameters rather than bad input data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
