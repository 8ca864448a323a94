use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid gate {index}: {reason}")]
    InvalidGate { index: usize, reason: String },

    #[error("invalid device: {0}")]
    InvalidDevice(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("device sampling failed after {0} attempts")]
    SamplingExhausted(usize),

    #[error("island {0} carries no charge")]
    EmptyIsland(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{0} islands found; the 5-gate device supports at most 2")]
    TooManyIslands(usize),

    #[error("Markov chain is reducible (state {0} cannot reach the rest)")]
    ReducibleChain(usize),

    #[error("sensor {0} lies on the channel at a dot or gate position")]
    SensorOnChannel(usize),

    #[error("patch size {size} exceeds map size {grid}")]
    PatchTooLarge { size: usize, grid: usize },

    #[error("schema: {0}")]
    Schema(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures of the filesystem rather than of the inputs.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
