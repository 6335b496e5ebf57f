//! Slice-level nearest-neighbor search.
//!
//! [`SliceIndex`] stores normalized slice embeddings and answers cosine
//! top-k queries either exactly (full scan) or through an HNSW graph. In both
//! modes cosine similarity is the inner product of unit vectors, and results
//! are ordered by score descending with ties broken by
//! `(volume_id, slice_index)` ascending.

mod hnsw;
mod persist;

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, SliceKey, Task, VolumeRecord};
use crate::error::{Error, Result};
use crate::linalg::dot;

pub use persist::{load_index, save_index, INDEX_MAGIC, INDEX_VERSION};

/// Index construction and search parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndexConfig {
    /// Maximum graph degree on upper layers (layer 0 allows `2m`).
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    /// Scan every vector instead of walking the graph.
    pub exact: bool,
    /// Seed for HNSW level draws.
    pub seed: u64,
}

impl Default for IndexConfig {
    fn default() -> Self {
        IndexConfig {
            m: 32,
            ef_construction: 200,
            ef_search: 128,
            exact: false,
            seed: 0,
        }
    }
}

impl IndexConfig {
    pub fn exact() -> Self {
        IndexConfig {
            exact: true,
            ..IndexConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::Input("HNSW m must be at least 2".into()));
        }
        if self.ef_construction == 0 || self.ef_search == 0 {
            return Err(Error::Input("ef parameters must be positive".into()));
        }
        Ok(())
    }
}

/// Selects which slices of a volume take part in indexing or querying.
#[derive(Clone, Default)]
pub enum SliceFilter {
    #[default]
    All,
    /// Only slices that show the given organ.
    Organ(Task),
    Custom(Arc<dyn Fn(&VolumeRecord, usize) -> bool + Send + Sync>),
}

impl fmt::Debug for SliceFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SliceFilter::All => f.write_str("All"),
            SliceFilter::Organ(t) => write!(f, "Organ({t})"),
            SliceFilter::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl SliceFilter {
    pub fn custom(pred: impl Fn(&VolumeRecord, usize) -> bool + Send + Sync + 'static) -> Self {
        SliceFilter::Custom(Arc::new(pred))
    }

    pub fn accepts(&self, volume: &VolumeRecord, slice: usize) -> bool {
        match self {
            SliceFilter::All => true,
            SliceFilter::Organ(organ) => volume.slice_contains_organ(*organ, slice),
            SliceFilter::Custom(pred) => pred(volume, slice),
        }
    }

    /// Accepted slice indices of `volume`, ascending.
    pub fn select(&self, volume: &VolumeRecord) -> Vec<usize> {
        match self {
            SliceFilter::All => (0..volume.num_slices()).collect(),
            SliceFilter::Organ(organ) => volume
                .organ_slices(*organ)
                .map(|s| s.iter().map(|&i| i as usize).collect())
                .unwrap_or_default(),
            SliceFilter::Custom(pred) => (0..volume.num_slices()).filter(|&i| pred(volume, i)).collect(),
        }
    }
}

/// One nearest-neighbor result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceHit {
    pub key: SliceKey,
    pub score: f64,
}

/// Internal node reference: position in the index plus its sort key.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Scored {
    pub node: u32,
    pub score: f64,
}

/// Immutable slice index. Safe to query from many threads at once.
#[derive(Debug)]
pub struct SliceIndex {
    config: IndexConfig,
    dim: usize,
    /// Sorted, so comparing positions compares ids.
    volume_ids: Vec<String>,
    /// `(volume position, slice index)` per node, in ascending order.
    nodes: Vec<(u32, u32)>,
    /// Indexed slices per volume position.
    volume_counts: Vec<u32>,
    vectors: Vec<f32>,
    graph: Option<hnsw::Hnsw>,
}

/// Indexes every slice of `corpus` accepted by `filter`.
pub fn build_index(corpus: &Corpus, config: &IndexConfig, filter: &SliceFilter) -> Result<SliceIndex> {
    SliceIndex::build(corpus.dim(), corpus.volumes(), config, filter)
}

impl SliceIndex {
    /// Indexes the accepted slices of `volumes`.
    pub fn build<'a>(
        dim: usize,
        volumes: impl IntoIterator<Item = &'a VolumeRecord>,
        config: &IndexConfig,
        filter: &SliceFilter,
    ) -> Result<Self> {
        config.validate()?;
        let mut selected: Vec<(&VolumeRecord, Vec<usize>)> = volumes
            .into_iter()
            .map(|v| (v, filter.select(v)))
            .filter(|(_, s)| !s.is_empty())
            .collect();
        selected.sort_by(|a, b| a.0.volume_id.cmp(&b.0.volume_id));
        if selected.windows(2).any(|w| w[0].0.volume_id == w[1].0.volume_id) {
            return Err(Error::Consistency("volume indexed twice".into()));
        }

        let mut volume_ids = Vec::with_capacity(selected.len());
        let mut volume_counts = Vec::with_capacity(selected.len());
        let mut nodes = Vec::new();
        let mut vectors = Vec::new();
        for (pos, (volume, slices)) in selected.iter().enumerate() {
            if volume.dim() != dim {
                return Err(Error::CorruptCorpus(format!(
                    "volume {} has dim {}, index expects {dim}",
                    volume.volume_id,
                    volume.dim()
                )));
            }
            volume_ids.push(volume.volume_id.clone());
            volume_counts.push(slices.len() as u32);
            for &s in slices {
                nodes.push((pos as u32, s as u32));
                vectors.extend_from_slice(volume.slice_embedding(s));
            }
        }
        if nodes.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let mut index = SliceIndex {
            config: *config,
            dim,
            volume_ids,
            nodes,
            volume_counts,
            vectors,
            graph: None,
        };
        if !config.exact {
            index.graph = Some(hnsw::Hnsw::build(&index));
        }
        Ok(index)
    }

    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of indexed slices.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_exact(&self) -> bool {
        self.graph.is_none()
    }

    /// Volume ids with at least one indexed slice, ascending.
    pub fn volume_ids(&self) -> &[String] {
        &self.volume_ids
    }

    /// Number of indexed slices of `volume_id` (0 if absent).
    pub fn slices_of(&self, volume_id: &str) -> usize {
        self.volume_position(volume_id)
            .map_or(0, |p| self.volume_counts[p as usize] as usize)
    }

    /// Every indexed key, in node order.
    pub fn keys(&self) -> impl Iterator<Item = SliceKey> + '_ {
        (0..self.nodes.len() as u32).map(|n| self.key(n))
    }

    pub(crate) fn volume_position(&self, volume_id: &str) -> Option<u32> {
        self.volume_ids
            .binary_search_by(|v| v.as_str().cmp(volume_id))
            .ok()
            .map(|p| p as u32)
    }

    pub(crate) fn vector(&self, node: u32) -> &[f32] {
        let i = node as usize * self.dim;
        &self.vectors[i..i + self.dim]
    }

    pub(crate) fn node_volume(&self, node: u32) -> u32 {
        self.nodes[node as usize].0
    }

    pub(crate) fn key(&self, node: u32) -> SliceKey {
        let (vol, slice) = self.nodes[node as usize];
        SliceKey {
            volume_id: self.volume_ids[vol as usize].clone(),
            slice_index: slice,
        }
    }

    /// Total order of results: score descending, then key ascending.
    pub(crate) fn cmp_scored(&self, a: &Scored, b: &Scored) -> Ordering {
        b.score
            .total_cmp(&a.score)
            .then_with(|| self.nodes[a.node as usize].cmp(&self.nodes[b.node as usize]))
    }

    /// Cosine top-`k` over the index. `query` must be L2-normalized.
    pub fn knn(&self, query: &[f32], k: usize) -> Result<Vec<SliceHit>> {
        self.knn_excluding(query, k, None)
    }

    /// As [`SliceIndex::knn`], skipping every slice of `exclude_volume`.
    pub fn knn_excluding(&self, query: &[f32], k: usize, exclude_volume: Option<&str>) -> Result<Vec<SliceHit>> {
        let hits = self.search(query, k, exclude_volume)?;
        Ok(hits
            .into_iter()
            .map(|s| SliceHit {
                key: self.key(s.node),
                score: s.score,
            })
            .collect())
    }

    pub(crate) fn search(&self, query: &[f32], k: usize, exclude_volume: Option<&str>) -> Result<Vec<Scored>> {
        if query.len() != self.dim {
            return Err(Error::Query(format!(
                "query has dimension {}, index has {}",
                query.len(),
                self.dim
            )));
        }
        if k == 0 {
            return Err(Error::Query("k must be at least 1".into()));
        }
        let excluded = exclude_volume.and_then(|id| self.volume_position(id));
        let mut out = match &self.graph {
            None => self.scan(query, k, excluded),
            Some(g) => {
                let extra = excluded.map_or(0, |p| self.volume_counts[p as usize] as usize);
                let ef = self.config.ef_search.max(k + extra);
                let mut found = g.search(self, query, ef);
                found.retain(|s| Some(self.node_volume(s.node)) != excluded);
                found
            }
        };
        out.sort_by(|a, b| self.cmp_scored(a, b));
        out.truncate(k);
        Ok(out)
    }

    fn scan(&self, query: &[f32], k: usize, excluded: Option<u32>) -> Vec<Scored> {
        let mut all: Vec<Scored> = (0..self.nodes.len() as u32)
            .filter(|&n| Some(self.node_volume(n)) != excluded)
            .map(|n| Scored {
                node: n,
                score: dot(query, self.vector(n)),
            })
            .collect();
        if all.len() > k {
            all.select_nth_unstable_by(k - 1, |a, b| self.cmp_scored(a, b));
            all.truncate(k);
        }
        all
    }
}
