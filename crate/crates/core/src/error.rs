use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("layout of {rows}x{cols} blocks exceeds the 16-block limit")]
    LayoutTooLarge { rows: usize, cols: usize },

    #[error("brute force limited to n <= {cap}, got {n}")]
    BruteForceCap { n: usize, cap: usize },

    #[error("grid search produced no candidates")]
    NoCandidates,

    #[error("trace has no usable (non-sentinel) samples")]
    NoUsableSamples,

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid bitmap: {0}")]
    Bitmap(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
