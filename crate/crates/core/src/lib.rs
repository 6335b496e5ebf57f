//! Content-based retrieval of volumes stored as sequences of slice embeddings.
//!
//! The crate covers the whole path from embedding files to evaluation tables:
//!
//! - [`corpus`]: the VEMB binary format, JSON-lines metadata and a seeded
//!   synthetic corpus generator.
//! - [`ann`]: a slice index, exact or HNSW-backed, with per-organ filters.
//! - [`retrieval`]: hit tables and the count / max / sum aggregations.
//! - [`rerank`]: late-interaction re-ranking (C-MIR) and reciprocal rank fusion.
//! - [`experiments`]: seeded query/database splits for the three database setups.
//! - [`metrics`]: relevance, P@k, AP, the exact signed-rank test and sweeps.

pub mod ann;
pub mod corpus;
mod error;
pub mod experiments;
mod fsutil;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod rerank;
pub mod retrieval;

pub use error::{Error, Result};
pub use fsutil::{write_atomic, write_bytes_atomic};
