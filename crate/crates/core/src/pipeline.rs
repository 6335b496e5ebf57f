//! One query through retrieval, aggregation and re-ranking.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::ann::{SliceFilter, SliceIndex};
use crate::corpus::{Corpus, VolumeRecord};
use crate::error::{Error, Result};
use crate::rerank::{cmir_rerank, rrf_fuse, EmbeddingMatrix, DEFAULT_RRF_K};
use crate::retrieval::{
    build_hit_table, rank_aggregation, HitTable, HitTableParams, Method, RankedList, DEFAULT_SLICES_PER_QUERY,
    DEFAULT_TOP_M,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Neighbours retrieved per query slice.
    pub slices_per_query: usize,
    /// Volumes kept from each aggregation.
    pub top_m: usize,
    pub rrf_k: u32,
    /// Aggregation whose top-M list C-MIR re-orders.
    pub cmir_source: Method,
    /// Build the C-MIR query matrix from the slices the plan's query filter
    /// keeps. When false every query slice is used.
    pub cmir_query_filtered: bool,
    pub exclude_self: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            slices_per_query: DEFAULT_SLICES_PER_QUERY,
            top_m: DEFAULT_TOP_M,
            rrf_k: DEFAULT_RRF_K,
            cmir_source: Method::CountBase,
            cmir_query_filtered: true,
            exclude_self: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.slices_per_query == 0 {
            return Err(Error::Input("slices_per_query must be positive".into()));
        }
        if self.top_m == 0 {
            return Err(Error::Input("top_m must be positive".into()));
        }
        if !self.cmir_source.is_aggregation() {
            return Err(Error::Input(format!(
                "cmir_source must be an aggregation method, got {}",
                self.cmir_source
            )));
        }
        Ok(())
    }

    pub fn hit_table_params(&self) -> HitTableParams {
        HitTableParams {
            slices_per_query: self.slices_per_query,
            exclude_self: self.exclude_self,
        }
    }
}

/// Ranked lists produced for one query volume.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    pub query_id: String,
    pub lists: BTreeMap<Method, RankedList>,
}

/// Aggregations needed to produce `methods`.
fn required_aggregations(methods: &BTreeSet<Method>, config: &PipelineConfig) -> BTreeSet<Method> {
    let mut need = BTreeSet::new();
    for &m in methods {
        match m {
            Method::Cmir => {
                need.insert(config.cmir_source);
            }
            Method::Rrf => need.extend(Method::AGGREGATIONS),
            agg => {
                need.insert(agg);
            }
        }
    }
    need
}

/// Runs `query` against `index` and returns the lists for `methods` only.
pub fn run_query(
    index: &SliceIndex,
    corpus: &Corpus,
    query: &VolumeRecord,
    query_filter: &SliceFilter,
    methods: &BTreeSet<Method>,
    config: &PipelineConfig,
) -> Result<QueryOutcome> {
    config.validate()?;
    let table = build_hit_table(index, query, query_filter, &config.hit_table_params())?;
    run_from_table(&table, corpus, query, query_filter, methods, config)
}

/// Same as [`run_query`] but starting from an existing hit table.
pub fn run_from_table(
    table: &HitTable,
    corpus: &Corpus,
    query: &VolumeRecord,
    query_filter: &SliceFilter,
    methods: &BTreeSet<Method>,
    config: &PipelineConfig,
) -> Result<QueryOutcome> {
    let mut aggregated = BTreeMap::new();
    for m in required_aggregations(methods, config) {
        aggregated.insert(m, rank_aggregation(table, m, config.top_m)?);
    }
    let mut lists = BTreeMap::new();
    for &m in methods {
        let list = match m {
            Method::Cmir => {
                let q = if config.cmir_query_filtered {
                    EmbeddingMatrix::from_slices(query, &query_filter.select(query))?
                } else {
                    EmbeddingMatrix::from_volume(query)
                };
                cmir_rerank(&q, &aggregated[&config.cmir_source], corpus)?
            }
            Method::Rrf => rrf_fuse(
                [
                    &aggregated[&Method::CountBase],
                    &aggregated[&Method::MaxScore],
                    &aggregated[&Method::SumSim],
                ],
                config.rrf_k,
            )?,
            agg => aggregated[&agg].clone(),
        };
        lists.insert(m, list);
    }
    Ok(QueryOutcome {
        query_id: query.volume_id.clone(),
        lists,
    })
}
