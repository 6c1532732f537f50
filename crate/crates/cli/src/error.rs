use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use dpn_core::Error as CoreError;

/// Failure of a command, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub const EXIT_IO: u8 = 1;
    pub const EXIT_USAGE: u8 = 2;
    pub const EXIT_PARSE: u8 = 3;
    pub const EXIT_NUMERIC: u8 = 4;

    pub fn usage(message: impl Display) -> Self {
        Self::Usage(message.to_string())
    }

    pub fn parse(path: &Path, message: impl Display) -> Self {
        Self::Parse {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => Self::EXIT_USAGE,
            Self::Parse { .. } => Self::EXIT_PARSE,
            Self::Numeric(_) => Self::EXIT_NUMERIC,
            Self::Io { .. } => Self::EXIT_IO,
        }
    }
}

impl From<CliError> for ExitCode {
    fn from(e: CliError) -> Self {
        ExitCode::from(e.exit_code())
    }
}

/// Invalid settings and shape mismatches are the caller's to fix; everything
/// else the library reports is a numeric failure.
impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidParameter { .. } | CoreError::DimensionMismatch { .. } => {
                Self::Usage(e.to_string())
            }
            _ => Self::Numeric(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
