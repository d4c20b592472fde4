//! Crate-wide error type with process exit-code mapping.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("parse error in {path}: {detail}")]
    Parse { path: PathBuf, detail: String },

    #[error("schema error in {path}: {detail}")]
    Schema { path: PathBuf, detail: String },

    #[error("duplicate date {date} in {path}")]
    DuplicateDate { path: PathBuf, date: String },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("no data: {0}")]
    NoData(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },

    #[error("embedding provider error: {0}")]
    Provider(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// CLI exit code: 1 configuration, 2 data, 3 runtime failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Param(_) => 1,
            Error::Parse { .. }
            | Error::Schema { .. }
            | Error::DuplicateDate { .. }
            | Error::Alignment(_)
            | Error::NoData(_) => 2,
            Error::Numeric(_) | Error::Divergence { .. } | Error::Provider(_) | Error::Io(_) => 3,
        }
    }
}
