use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("invalid tile {hr}x{wr} (vl={vl}): {reason}")]
    InvalidTile {
        hr: usize,
        wr: usize,
        vl: usize,
        reason: String,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
