//! Graph-based approximate nearest-neighbor search with matched hierarchical
//! and flat indexes, a recall/latency benchmark harness, and a hubness
//! analysis suite.
//!
//! The two index types share their distance kernels, beam search, pruning
//! heuristic, and storage layout, so comparing them isolates exactly one
//! variable: the hierarchy.

pub mod bench;
pub mod error;
pub mod flat;
pub mod graph;
pub mod hnsw;
pub mod hubness;
pub mod index_io;
pub mod search;
pub mod stats;
pub mod synth;
pub mod vecstore;

pub use error::{Error, Result};
pub use flat::FlatIndex;
pub use graph::{FlatGraph, LayeredGraph};
pub use hnsw::{BuildParams, HnswBuilder, HnswIndex};
pub use search::{Candidate, SearchTrace};
pub use vecstore::{distance, Metric, VectorSet};
