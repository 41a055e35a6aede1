use std::io;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("empty crop: cube projects entirely outside the frame")]
    EmptyCrop,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("no hand found: {0}")]
    NoHand(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("checksum mismatch in {0}")]
    Checksum(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error("architecture mismatch: expected {expected}, found {found}")]
    ArchitectureMismatch { expected: String, found: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
