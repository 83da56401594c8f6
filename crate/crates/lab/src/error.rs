use std::path::PathBuf;

use thiserror::Error;

/// Failures of a lab invocation, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("output directory {0} already exists and is not empty")]
    OutputCollision(PathBuf),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("numerical guard breach: {0}")]
    Guard(qvp_core::Error),

    #[error(transparent)]
    Model(qvp_core::Error),
}

impl LabError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Config { field: field.into(), message: message.into() }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Self::Io { context: context.into(), source }
    }

    /// 2 for configuration and environment problems, 3 for guard breaches.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Guard(_) => 3,
            _ => 2,
        }
    }
}

impl From<qvp_core::Error> for LabError {
    fn from(e: qvp_core::Error) -> Self {
        match e {
            qvp_core::Error::BoundaryMass { .. } | qvp_core::Error::BoundaryViolation { .. } => LabError::Guard(e),
            other => LabError::Model(other),
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
