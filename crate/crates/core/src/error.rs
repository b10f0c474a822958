use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the simulation / optimization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates a constraint. `key` is the dotted path
    /// of the offending entry, e.g. `pulses[0].sigma`.
    #[error("invalid configuration `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("configuration file {path} could not be read: {source}")]
    ConfigMissing {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("configuration file {path} could not be parsed: {message}")]
    ConfigParse { path: PathBuf, message: String },

    /// The adaptive integrator could not make progress.
    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// True for every error that originates in user configuration.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config { .. }
                | Error::Dimension(_)
                | Error::ConfigMissing { .. }
                | Error::ConfigParse { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
