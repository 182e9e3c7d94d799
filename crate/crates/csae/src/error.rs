use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] csae_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {msg}", path.display())]
    Data { path: PathBuf, msg: String },
    #[error("checkpoint version mismatch: file has format {found}, this build reads {expected}")]
    VersionMismatch { found: String, expected: u32 },
    #[error("checkpoint payload truncated: manifest needs {expected} bytes, file holds {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("manifest inconsistency: {0}")]
    ManifestInconsistency(String),
    #[error("malformed checkpoint header: {0}")]
    Header(String),
    #[error("config: {0}")]
    Config(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("gradient check failed: max relative error {max:e} exceeds {tol:e}")]
    GradCheck { max: f64, tol: f64 },
}

pub type AppResult<T> = Result<T, AppError>;

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 1 usage/config, 2 data, 3 numeric, 4 gradient check.
    pub fn exit_code(&self) -> u8 {
        use csae_core::Error as E;
        match self {
            AppError::Usage(_) | AppError::Config(_) => 1,
            AppError::Core(E::InvalidConfig(_)) => 1,
            AppError::Core(E::NonFinite(_)) => 3,
            AppError::GradCheck { .. } => 4,
            _ => 2,
        }
    }
}
