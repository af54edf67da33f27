use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file was readable but its contents are not a supported height map.
    #[error("unsupported format: {0}")]
    Format(String),

    /// An argument or configuration value violates an operation's contract.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A named configuration field holds an invalid value.
    #[error("invalid {field}: {message}")]
    Field { field: String, message: String },

    /// The weight archive is missing an entry or an entry has the wrong shape.
    #[error("weight archive entry {entry}: {reason}")]
    WeightFormat { entry: String, reason: String },

    #[error(
        "optimization diverged at iteration {iteration}: content={content}, style={style}, tv={tv}, total={total}"
    )]
    Divergence {
        iteration: usize,
        content: f64,
        style: f64,
        tv: f64,
        total: f64,
    },

    #[error("cancelled")]
    Cancelled,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn field(field: &str, message: impl Into<String>) -> Self {
        Error::Field {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
