use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("geography has {size} sites, above the exact-method cap of {cap}")]
    SizeCap { size: usize, cap: usize },

    #[error("configuration error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("projected cost {projected:.3e} exceeds the budget {budget:.3e}: {detail}")]
    Budget {
        projected: f64,
        budget: f64,
        detail: String,
    },

    #[error("numerical diagnostic failed: {0}")]
    Numerical(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attributes a parameter error to configuration section `key`;
    /// numerical and I/O failures pass through unchanged.
    pub(crate) fn within(self, key: &str) -> Self {
        match self {
            Error::InvalidParameter { .. } | Error::SizeCap { .. } => Error::config(key, self.to_string()),
            Error::Config { key: inner, message } => Error::config(format!("{key}.{inner}"), message),
            other => other,
        }
    }

    /// Process exit code of the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter { .. } | Error::SizeCap { .. } | Error::Config { .. } => 2,
            Error::Budget { .. } => 3,
            Error::Numerical(_) => 4,
            Error::Io { .. } | Error::Csv { .. } => 1,
        }
    }
}
