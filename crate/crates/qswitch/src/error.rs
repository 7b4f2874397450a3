use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("{0}")]
    Core(#[from] qswitch_core::Error),
}

impl AppError {
    pub fn config(msg: impl Into<String>) -> Self {
        AppError::Config(msg.into())
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl ToString) -> Self {
        AppError::Format {
            path: path.into(),
            message: msg.to_string(),
        }
    }

    /// Process exit code: 3 for failures of the numerics themselves, 2 for
    /// everything traceable to the configuration or input files.
    pub fn exit_code(&self) -> i32 {
        use qswitch_core::Error as E;
        match self {
            AppError::Core(E::NoConvergence { .. } | E::NonFinite(_) | E::ZeroTraceOverlap { .. }) => 3,
            _ => 2,
        }
    }
}

pub type AppResult<T> = Result<T, AppError>;
