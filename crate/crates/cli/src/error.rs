use std::process::ExitCode;

use terrastyle_core::Error as CoreError;
use thiserror::Error;

pub const WEIGHTS_HINT: &str = "convert pretrained VGG-19 weights with tools/convert_vgg19.py, \
     or write a seeded stand-in archive with `terrastyle init-weights --out <path>`";

/// Failure of one command, carrying its process exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, invalid configuration, or unreadable input (exit 2).
    #[error("{0}")]
    Usage(String),

    /// The weight archive is missing or unusable (exit 3).
    #[error("{0}\nhint: {WEIGHTS_HINT}")]
    Weights(String),

    /// The optimization produced a non-finite loss or gradient (exit 4).
    #[error("{0}")]
    Divergence(String),

    /// Writing an output failed (exit 1).
    #[error("{0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Output(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Weights(_) => 3,
            CliError::Divergence(_) => 4,
        })
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    /// Classifies an error raised while reading inputs.
    pub fn input(e: CoreError) -> Self {
        match e {
            CoreError::Divergence { .. } => CliError::Divergence(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }

    pub fn output(e: impl std::fmt::Display) -> Self {
        CliError::Output(e.to_string())
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;
