use std::path::{Path, PathBuf};

use thiserror::Error;

pub type ServiceResult<T> = Result<T, ServiceError>;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("corrupt store document: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Core(#[from] terrastyle_core::Error),

    #[error("artifact {0} not found")]
    MissingArtifact(String),

    #[error("malformed id {0:?}")]
    BadId(String),

    /// A referenced job, style, or artifact does not exist.
    #[error("{0}")]
    NotFound(String),

    /// A request field failed validation.
    #[error("invalid {field}: {message}")]
    Invalid { field: String, message: String },

    /// The operation does not apply in the target's current state.
    #[error("{0}")]
    Conflict(String),
}

impl ServiceError {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ServiceError::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        ServiceError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
