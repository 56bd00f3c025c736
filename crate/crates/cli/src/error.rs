use std::path::{Path, PathBuf};

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const GRADCHECK_FAILED: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERIC: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{origin}: {message}")]
    Config { origin: String, message: String },

    #[error("{0}")]
    Data(String),

    #[error("{0}")]
    Numeric(String),

    #[error("gradient check failed: max relative error {0:.3e}")]
    GradCheckFailed(f64),
}

impl CliError {
    pub fn config(origin: impl AsRef<Path>, message: impl Into<String>) -> Self {
        CliError::Config {
            origin: origin.as_ref().display().to_string(),
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }

    pub fn missing(path: &PathBuf) -> Self {
        CliError::Data(format!("{}: no such file", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => exit::CONFIG,
            CliError::Data(_) => exit::DATA,
            CliError::Numeric(_) => exit::NUMERIC,
            CliError::GradCheckFailed(_) => exit::GRADCHECK_FAILED,
        }
    }
}

impl From<nornet::Error> for CliError {
    fn from(e: nornet::Error) -> Self {
        use nornet::Error as E;
        match e {
            E::Parse { .. } | E::Io { .. } | E::EmptyCorpus(_) => CliError::Data(e.to_string()),
            E::NonFinite(_) => CliError::Numeric(e.to_string()),
            E::Shape { .. } | E::Contract(_) => CliError::Config {
                origin: "config".into(),
                message: e.to_string(),
            },
        }
    }
}
