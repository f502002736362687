use std::io;
use std::path::PathBuf;

/// Harness errors. [`Error::exit_code`] gives the process exit status.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] macs_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Self::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// 2 configuration or schema, 3 worker protocol or bridge, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Core(macs_core::Error::Protocol(_) | macs_core::Error::Bridge(_)) => 3,
            Self::Core(_) | Self::Format { .. } | Self::Config(_) => 2,
            Self::Io { .. } => 4,
        }
    }
}
