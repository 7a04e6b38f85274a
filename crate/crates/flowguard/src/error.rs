//! Crate-wide error type.
//!
//! Every fallible operation in this crate returns [`Error`]. The variants
//! map one-to-one onto the process exit codes used by the CLI, so nothing
//! downstream has to guess how severe a failure is.

use std::path::PathBuf;

use thiserror::Error;

/// Unified error type for simulation, monitoring and analysis.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad user input: malformed config, invalid monitor definition,
    /// out-of-range parameter. CLI exit code 1.
    #[error("configuration error: {0}")]
    Config(String),

    /// Parse failure in one of the text formats, with file/line context.
    /// Treated as a configuration error (CLI exit code 1).
    #[error("{file}:{line}: {msg}")]
    Parse {
        /// Display name of the offending input (path or synthetic label).
        file: String,
        /// 1-based line number.
        line: usize,
        /// What went wrong.
        msg: String,
    },

    /// A bundled design disagreed with its software reference model, or an
    /// internal contract (bit widths, disabled transition fired, ...) was
    /// violated. CLI exit code 2.
    #[error("design defect: {0}")]
    Defect(String),

    /// A requested metric has no defined value for the given data
    /// (for example a detection rate over zero observed errors).
    /// Treated as a configuration/usage error (CLI exit code 1).
    #[error("undefined metric: {0}")]
    Undefined(String),

    /// Filesystem failure. CLI exit code 3.
    #[error("i/o error on {path}: {source}")]
    Io {
        /// Path involved in the failed operation.
        path: PathBuf,
        /// Underlying OS error.
        source: std::io::Error,
    },
}

impl Error {
    /// Shorthand for a [`Error::Parse`] with context.
    pub fn parse(file: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            msg: msg.into(),
        }
    }

    /// Wraps an OS error with the path it occurred on.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code the CLI uses for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse { .. } | Error::Undefined(_) => 1,
            Error::Defect(_) => 2,
            Error::Io { .. } => 3,
        }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
