//! Re-ranking of the top-M candidates of a query.

mod cmir;
mod rrf;

pub use cmir::{cmir_rerank, cmir_score, embedding_matrix, similarity_matrix, EmbeddingMatrix, SimilarityMatrix};
pub use rrf::{rrf_fuse, DEFAULT_RRF_K};
