use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Bad command line or configuration.
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(#[from] asss_core::Error),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    pub fn usage(message: impl Into<String>) -> Self {
        HarnessError::Usage(message.into())
    }

    /// Process exit code: 1 usage, 2 data or output, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) => 1,
            HarnessError::Data(e) if e.is_numerical() => 3,
            HarnessError::Data(_) | HarnessError::Output { .. } => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
