//! Late-interaction re-ranking over whole-volume embedding matrices.
//!
//! For a query matrix `Q` (`n × L`) and a candidate matrix `C` (`m × L`)
//! the rank score is `Σᵢ maxⱼ ⟨Qᵢ, Cⱼ⟩`: each query slice is matched with
//! its best candidate slice and the matches are summed.

use std::borrow::Cow;

use rayon::prelude::*;

use crate::corpus::{normalize_in_place, Corpus, VolumeRecord};
use crate::error::{Error, Result};
use crate::linalg::gemm_abt;
use crate::retrieval::{Method, RankedEntry, RankedList};

/// Candidate rows multiplied per block; bounds the scratch tile to `n × 256`.
const CANDIDATE_BLOCK: usize = 256;

/// Row-major stack of unit-norm slice embeddings of one volume.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix<'a> {
    dim: usize,
    rows: Cow<'a, [f32]>,
}

impl<'a> EmbeddingMatrix<'a> {
    /// Builds an owned matrix, normalizing each row.
    pub fn new(dim: usize, mut rows: Vec<f32>) -> Result<EmbeddingMatrix<'static>> {
        if dim == 0 || rows.is_empty() || rows.len() % dim != 0 {
            return Err(Error::Input(format!(
                "{} values do not form a non-empty matrix with {dim} columns",
                rows.len()
            )));
        }
        for row in rows.chunks_exact_mut(dim) {
            normalize_in_place(row)?;
        }
        Ok(EmbeddingMatrix {
            dim,
            rows: Cow::Owned(rows),
        })
    }

    /// Borrows every slice of `volume`, in slice order.
    pub fn from_volume(volume: &'a VolumeRecord) -> Self {
        EmbeddingMatrix {
            dim: volume.dim(),
            rows: Cow::Borrowed(volume.embeddings()),
        }
    }

    /// Copies the listed slices of `volume`, in the given order.
    pub fn from_slices(volume: &VolumeRecord, slices: &[usize]) -> Result<EmbeddingMatrix<'static>> {
        if slices.is_empty() {
            return Err(Error::Query(format!(
                "no slices selected from volume {}",
                volume.volume_id
            )));
        }
        let mut rows = Vec::with_capacity(slices.len() * volume.dim());
        for &s in slices {
            if s >= volume.num_slices() {
                return Err(Error::Query(format!(
                    "slice {s} outside volume {} ({} slices)",
                    volume.volume_id,
                    volume.num_slices()
                )));
            }
            rows.extend_from_slice(volume.slice_embedding(s));
        }
        Ok(EmbeddingMatrix {
            dim: volume.dim(),
            rows: Cow::Owned(rows),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.rows
    }
}

/// The embedding matrix of a whole volume.
pub fn embedding_matrix(volume: &VolumeRecord) -> EmbeddingMatrix<'_> {
    EmbeddingMatrix::from_volume(volume)
}

/// Cosine similarities between every query row and every candidate row.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
}

impl SimilarityMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        f64::from(self.values[i * self.cols + j])
    }

    pub fn transpose(&self) -> SimilarityMatrix {
        let mut values = vec![0f32; self.values.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                values[j * self.rows + i] = self.values[i * self.cols + j];
            }
        }
        SimilarityMatrix {
            rows: self.cols,
            cols: self.rows,
            values,
        }
    }

    /// Sum of row maxima.
    pub fn row_max_sum(&self) -> f64 {
        self.values
            .chunks_exact(self.cols)
            .map(|r| f64::from(r.iter().copied().fold(f32::NEG_INFINITY, f32::max)))
            .sum()
    }
}

fn check_dims(q: &EmbeddingMatrix, c: &EmbeddingMatrix) -> Result<()> {
    if q.dim != c.dim {
        return Err(Error::Input(format!(
            "embedding dimensions differ: {} vs {}",
            q.dim, c.dim
        )));
    }
    Ok(())
}

pub fn similarity_matrix(q: &EmbeddingMatrix, c: &EmbeddingMatrix) -> Result<SimilarityMatrix> {
    check_dims(q, c)?;
    let (rows, cols) = (q.n_rows(), c.n_rows());
    let mut values = vec![0f32; rows * cols];
    gemm_abt(q.as_slice(), c.as_slice(), q.dim, &mut values);
    Ok(SimilarityMatrix { rows, cols, values })
}

/// Rank score `Σᵢ maxⱼ ⟨qᵢ, cⱼ⟩`, computed block-wise without
/// materializing the full similarity matrix.
pub fn cmir_score(q: &EmbeddingMatrix, c: &EmbeddingMatrix) -> Result<f64> {
    check_dims(q, c)?;
    let n = q.n_rows();
    let dim = q.dim;
    let mut row_max = vec![f32::NEG_INFINITY; n];
    let mut tile = Vec::new();
    for block in c.as_slice().chunks(CANDIDATE_BLOCK * dim) {
        let m = block.len() / dim;
        tile.resize(n * m, 0f32);
        gemm_abt(q.as_slice(), block, dim, &mut tile);
        for (best, row) in row_max.iter_mut().zip(tile.chunks_exact(m)) {
            for &v in row {
                *best = best.max(v);
            }
        }
    }
    Ok(row_max.iter().map(|&v| f64::from(v)).sum())
}

/// Re-orders `candidates` by rank score against `query`. Candidate matrices
/// always hold all slices of their volume. Equal scores keep incoming order.
pub fn cmir_rerank(query: &EmbeddingMatrix, candidates: &RankedList, corpus: &Corpus) -> Result<RankedList> {
    let volumes: Vec<&VolumeRecord> = candidates.ids().map(|id| corpus.require(id)).collect::<Result<_>>()?;
    let scores: Vec<f64> = volumes
        .par_iter()
        .map(|v| cmir_score(query, &EmbeddingMatrix::from_volume(v)))
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..volumes.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let entries = order
        .into_iter()
        .map(|i| RankedEntry {
            volume_id: volumes[i].volume_id.clone(),
            score: scores[i],
        })
        .collect();
    RankedList::new(Method::Cmir, entries)
}
