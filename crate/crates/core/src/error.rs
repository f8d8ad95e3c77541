use std::io;

use thiserror::Error;

/// Errors raised anywhere in the reassembly stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid rotation: {0}")]
    InvalidRotation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("training diverged at {stage}: {detail}")]
    Divergence { stage: String, detail: String },

    #[error("load error at byte offset {offset}: {detail}")]
    Load { offset: u64, detail: String },

    #[error("checksum mismatch for tensor `{tensor}` at byte offset {offset}")]
    Checksum { tensor: String, offset: u64 },

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Domain(_) | Error::Dimension(_) | Error::EmptyInput(_) => 2,
            Error::InvalidRotation(_) => 2,
            Error::Divergence { .. } => 3,
            Error::Io(_) | Error::Load { .. } | Error::Checksum { .. } | Error::Serde(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
