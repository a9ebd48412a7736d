use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("sample range {start}..{end} invalid for a record of {len} samples")]
    Range { start: usize, end: usize, len: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate signal: {0}")]
    Degenerate(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
