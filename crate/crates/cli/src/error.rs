use std::fmt;
use std::path::{Path, PathBuf};

use sonar_tbd::Error;

/// Failure of a subcommand, classified by its exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    Validation(String),
    Pipeline(Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit status; 2 is left to argument parsing errors.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Pipeline(_) => 1,
            CliError::Config(_) => 3,
            CliError::Io { .. } => 4,
            CliError::Validation(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Validation(msg) => write!(f, "validation error: {msg}"),
            CliError::Pipeline(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CliError::Io { source, .. } => Some(source),
            CliError::Pipeline(e) => Some(e),
            _ => None,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(msg) => CliError::Config(msg),
            Error::Io { path, source } => CliError::Io { path, source },
            Error::Format { path, reason } => CliError::Io {
                path,
                source: std::io::Error::new(std::io::ErrorKind::InvalidData, reason),
            },
            Error::Validation(msg) | Error::InvalidParameter(msg) => CliError::Validation(msg),
            other => CliError::Pipeline(other),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
