use std::path::PathBuf;

use thiserror::Error;
use ultrafield_core::Error as CoreError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("missing config key `{0}`")]
    MissingKey(String),

    #[error("config key `{key}`: {detail}")]
    InvalidKey { key: String, detail: String },

    #[error("config line {line}: {detail}")]
    Syntax { line: usize, detail: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn invalid(key: &str, detail: impl ToString) -> Self {
        CliError::InvalidKey { key: key.to_string(), detail: detail.to_string() }
    }

    /// `1` for a mathematical rejection, `2` for everything the user has to fix.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) => match e {
                CoreError::NotPrime(_)
                | CoreError::PrimeMismatch(..)
                | CoreError::DimensionMismatch { .. }
                | CoreError::LatticeMismatch(_)
                | CoreError::DomainMismatch { .. }
                | CoreError::Parse { .. }
                | CoreError::InvalidParameter { .. }
                | CoreError::EnumerationTooLarge(_)
                | CoreError::UnsortedRadii => 2,
                _ => 1,
            },
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
