//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("zero vector under the angular metric ({0})")]
    ZeroVector(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("node {node} not present at layer {layer}")]
    NodeNotFound { node: u32, layer: usize },

    #[error("neighbor list of length {got} exceeds capacity {cap} at layer {layer}")]
    CapacityExceeded { got: usize, cap: usize, layer: usize },

    #[error("self-loop on node {0}")]
    SelfLoop(u32),

    #[error("duplicate neighbor {0}")]
    DuplicateNeighbor(u32),

    #[error("index is empty")]
    EmptyIndex,

    #[error("k = {k} exceeds limit {limit}")]
    KTooLarge { k: usize, limit: usize },

    #[error("bad magic bytes: expected {expected:?}")]
    BadMagic { expected: &'static str },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("file truncated: {0}")]
    Truncated(String),

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error("empty sample")]
    EmptySample,

    #[error("sample has zero variance")]
    ZeroVariance,

    #[error("no hub nodes labeled")]
    NoHubs,

    #[error("metric mismatch: index built with {index:?}, data tagged {data:?}")]
    MetricMismatch { index: String, data: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
