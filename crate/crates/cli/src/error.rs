use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const INVALID: i32 = 2;
    pub const UNSUPPORTED: i32 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed input: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{context}: {source}")]
    Invalid {
        context: String,
        #[source]
        source: setmdp_core::Error,
    },
    #[error("{0}")]
    Core(#[from] setmdp_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use setmdp_core::Error as E;
        match self {
            CliError::Io { .. } => exit::IO,
            CliError::Unsupported(_) => exit::UNSUPPORTED,
            CliError::Core(E::Unsupported(_)) | CliError::Invalid { source: E::Unsupported(_), .. } => {
                exit::UNSUPPORTED
            }
            CliError::Core(E::NoConvergence { .. }) => exit::IO,
            _ => exit::INVALID,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(context: impl Into<String>, source: setmdp_core::Error) -> Self {
        CliError::Invalid {
            context: context.into(),
            source,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
