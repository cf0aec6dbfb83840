use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the library and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    /// A covariance that is not symmetric positive definite, or non-finite parameters.
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    /// A caller violated an operation precondition (empty input, bad index, negative weight).
    #[error("usage error: {0}")]
    Usage(String),

    /// A configuration value violates a type invariant. `key` is the dotted config path.
    #[error("invalid config value for `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("failed to parse config {path}: {message}")]
    ConfigParse { path: PathBuf, message: String },

    #[error("config file not found: {0}")]
    ConfigMissing(PathBuf),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by configuration (mapped to exit code 2 by the CLI).
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config { .. }
                | Error::ConfigParse { .. }
                | Error::ConfigMissing(_)
                | Error::Usage(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
