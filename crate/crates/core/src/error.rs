use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid mismatch spec: {0}")]
    InvalidMismatch(String),

    #[error("could not draw valid parameters for trial {trial} after {attempts} attempts: {last}")]
    Sampling {
        trial: u64,
        attempts: u32,
        last: String,
    },

    #[error("network placement failed: {0}")]
    Placement(String),

    #[error("event {index} at ({x}, {y}) lies outside the {width}x{height} geometry")]
    OutOfBounds {
        index: usize,
        x: u16,
        y: u16,
        width: u16,
        height: u16,
    },

    #[error(transparent)]
    Parse(#[from] crate::events::ParseError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
