use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("storage error at {path}: {source}")]
    Storage {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in field `{field}`: {detail}")]
    Format { field: &'static str, detail: String },

    #[error("length error: expected {expected} bytes, found {actual}")]
    Length { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("imaginary residue {residue:e} exceeds tolerance {tolerance:e}")]
    Symmetry { residue: f64, tolerance: f64 },

    #[error("input error: {0}")]
    Input(String),

    #[error("training diverged at stage {stage}, step {step}: non-finite loss")]
    Divergence { stage: u8, step: usize },
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn storage(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Storage {
            path: path.into(),
            source,
        }
    }
}
