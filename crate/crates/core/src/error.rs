use thiserror::Error;

use crate::container::ContainerError;
use crate::octree::ply::PlyError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("bin index {index} out of range for grid with {bins} bins")]
    InvalidIndex { index: i64, bins: usize },

    #[error("value {0} lies outside the grid domain")]
    Domain(f64),

    /// The quantization margin does not cover the tolerable error, so the
    /// reproduction guarantee would not hold.
    #[error("configuration rejected: {0}")]
    ConfigRejected(String),

    #[error("malformed stream: {0}")]
    MalformedStream(String),

    #[error("truncated stream")]
    Truncated,

    #[error("flag count mismatch: expected {expected}, found {found}")]
    CountMismatch { expected: u64, found: u64 },

    #[error(transparent)]
    Container(#[from] ContainerError),

    #[error(transparent)]
    Ply(#[from] PlyError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
