//! Volume-level retrieval from slice-level hits.
//!
//! Every selected slice of a query volume asks the index for its nearest
//! slices; each returned slice credits its owning volume in a [`HitTable`].
//! The table is then ranked three ways: by hit count, by best hit score and
//! by summed hit score.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ann::{SliceFilter, SliceIndex};
use crate::corpus::VolumeRecord;
use crate::error::{Error, Result};

pub const DEFAULT_SLICES_PER_QUERY: usize = 20;
pub const DEFAULT_TOP_M: usize = 20;

/// Ranking method that produced a [`RankedList`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    CountBase,
    MaxScore,
    SumSim,
    Cmir,
    Rrf,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::CountBase,
        Method::MaxScore,
        Method::SumSim,
        Method::Cmir,
        Method::Rrf,
    ];
    /// The hit-table aggregations.
    pub const AGGREGATIONS: [Method; 3] = [Method::CountBase, Method::MaxScore, Method::SumSim];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::CountBase => "count_base",
            Method::MaxScore => "max_score",
            Method::SumSim => "sum_sim",
            Method::Cmir => "cmir",
            Method::Rrf => "rrf",
        }
    }

    pub fn is_aggregation(self) -> bool {
        Method::AGGREGATIONS.contains(&self)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Input(format!("unknown method `{s}`")))
    }
}

/// Accumulated hits of one database volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HitStats {
    pub hit_count: u32,
    pub max_score: f64,
    pub sum_score: f64,
}

/// Per-query accumulator keyed by database volume id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HitTable {
    entries: BTreeMap<String, HitStats>,
}

impl HitTable {
    pub fn new() -> Self {
        HitTable::default()
    }

    pub fn record(&mut self, volume_id: &str, score: f64) {
        match self.entries.get_mut(volume_id) {
            Some(s) => {
                s.hit_count += 1;
                s.max_score = s.max_score.max(score);
                s.sum_score += score;
            }
            None => {
                self.entries.insert(
                    volume_id.to_owned(),
                    HitStats {
                        hit_count: 1,
                        max_score: score,
                        sum_score: score,
                    },
                );
            }
        }
    }

    pub fn get(&self, volume_id: &str) -> Option<&HitStats> {
        self.entries.get(volume_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in ascending volume id order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &HitStats)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }
}

/// One retrieved volume and the score its method assigned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub volume_id: String,
    pub score: f64,
}

/// Volumes ordered best first, as produced by one method for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    method: Method,
    entries: Vec<RankedEntry>,
}

impl RankedList {
    /// Checks that ids are distinct and scores non-increasing.
    pub fn new(method: Method, entries: Vec<RankedEntry>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.volume_id.as_str()) {
                return Err(Error::Input(format!(
                    "volume {} appears twice in a {method} list",
                    e.volume_id
                )));
            }
            if !e.score.is_finite() {
                return Err(Error::Input(format!("non-finite score for {}", e.volume_id)));
            }
        }
        if entries.windows(2).any(|w| w[0].score < w[1].score) {
            return Err(Error::Input(format!("{method} list scores are not non-increasing")));
        }
        Ok(RankedList { method, entries })
    }

    pub fn empty(method: Method) -> Self {
        RankedList {
            method,
            entries: Vec::new(),
        }
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn entries(&self) -> &[RankedEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.volume_id.as_str())
    }

    /// 1-based rank of `volume_id`.
    pub fn rank_of(&self, volume_id: &str) -> Option<usize> {
        self.entries
            .iter()
            .position(|e| e.volume_id == volume_id)
            .map(|p| p + 1)
    }
}

/// Knobs of [`build_hit_table`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HitTableParams {
    /// Nearest slices retrieved per query slice.
    pub slices_per_query: usize,
    /// Skip slices of the query volume itself when it is indexed.
    pub exclude_self: bool,
}

impl Default for HitTableParams {
    fn default() -> Self {
        HitTableParams {
            slices_per_query: DEFAULT_SLICES_PER_QUERY,
            exclude_self: true,
        }
    }
}

/// Runs k-NN for every slice of `query` accepted by `query_filter` and
/// records every returned slice in a hit table. Several hits of one volume
/// for the same query slice each count.
pub fn build_hit_table(
    index: &SliceIndex,
    query: &VolumeRecord,
    query_filter: &SliceFilter,
    params: &HitTableParams,
) -> Result<HitTable> {
    let slices = query_filter.select(query);
    if slices.is_empty() {
        return Err(Error::Query(format!(
            "query volume {} has no slices after filtering",
            query.volume_id
        )));
    }
    let exclude = params.exclude_self.then_some(query.volume_id.as_str());
    let per_slice: Vec<_> = slices
        .par_iter()
        .map(|&s| index.knn_excluding(query.slice_embedding(s), params.slices_per_query, exclude))
        .collect::<Result<_>>()?;

    // Accumulate in slice order so floating-point sums do not depend on scheduling.
    let mut table = HitTable::new();
    for hits in &per_slice {
        for h in hits {
            table.record(&h.key.volume_id, h.score);
        }
    }
    Ok(table)
}

fn rank_by(
    table: &HitTable,
    m: usize,
    method: Method,
    cmp: impl Fn(&HitStats, &HitStats) -> Ordering,
    score: impl Fn(&HitStats) -> f64,
) -> RankedList {
    let mut rows: Vec<(&str, &HitStats)> = table.iter().collect();
    rows.sort_by(|a, b| cmp(a.1, b.1).then_with(|| a.0.cmp(b.0)));
    rows.truncate(m);
    RankedList {
        method,
        entries: rows
            .into_iter()
            .map(|(id, s)| RankedEntry {
                volume_id: id.to_owned(),
                score: score(s),
            })
            .collect(),
    }
}

/// Most hits first; ties by larger summed score, then volume id.
pub fn rank_count_base(table: &HitTable, m: usize) -> RankedList {
    rank_by(
        table,
        m,
        Method::CountBase,
        |a, b| b.hit_count.cmp(&a.hit_count).then(b.sum_score.total_cmp(&a.sum_score)),
        |s| f64::from(s.hit_count),
    )
}

/// Highest single hit score first; ties by hit count, then volume id.
pub fn rank_max_score(table: &HitTable, m: usize) -> RankedList {
    rank_by(
        table,
        m,
        Method::MaxScore,
        |a, b| b.max_score.total_cmp(&a.max_score).then(b.hit_count.cmp(&a.hit_count)),
        |s| s.max_score,
    )
}

/// Largest summed hit score first; ties by hit count, then volume id.
pub fn rank_sum_sim(table: &HitTable, m: usize) -> RankedList {
    rank_by(
        table,
        m,
        Method::SumSim,
        |a, b| b.sum_score.total_cmp(&a.sum_score).then(b.hit_count.cmp(&a.hit_count)),
        |s| s.sum_score,
    )
}

/// Dispatches to the aggregation named by `method`.
pub fn rank_aggregation(table: &HitTable, method: Method, m: usize) -> Result<RankedList> {
    match method {
        Method::CountBase => Ok(rank_count_base(table, m)),
        Method::MaxScore => Ok(rank_max_score(table, m)),
        Method::SumSim => Ok(rank_sum_sim(table, m)),
        other => Err(Error::Input(format!("{other} is not a hit-table aggregation"))),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    query_id: String,
    rank: usize,
    volume_id: String,
    score: f64,
    method: Method,
}

/// Writes lists as `query_id,rank,volume_id,score,method` rows (rank is 1-based).
pub fn write_ranked_csv<'a, W: Write>(
    writer: W,
    lists: impl IntoIterator<Item = (&'a str, &'a RankedList)>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (query_id, list) in lists {
        for (i, e) in list.entries().iter().enumerate() {
            w.serialize(CsvRow {
                query_id: query_id.to_owned(),
                rank: i + 1,
                volume_id: e.volume_id.clone(),
                score: e.score,
                method: list.method(),
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads rows written by [`write_ranked_csv`], grouped by `(query_id, method)`.
pub fn read_ranked_csv<R: Read>(reader: R) -> Result<BTreeMap<(String, Method), RankedList>> {
    let mut rows: BTreeMap<(String, Method), Vec<(usize, RankedEntry)>> = BTreeMap::new();
    for row in csv::Reader::from_reader(reader).deserialize() {
        let row: CsvRow = row?;
        rows.entry((row.query_id, row.method)).or_default().push((
            row.rank,
            RankedEntry {
                volume_id: row.volume_id,
                score: row.score,
            },
        ));
    }
    let mut out = BTreeMap::new();
    for ((query, method), mut entries) in rows {
        entries.sort_by_key(|(rank, _)| *rank);
        if entries.iter().enumerate().any(|(i, (rank, _))| *rank != i + 1) {
            return Err(Error::Input(format!(
                "ranks of {method} list for query {query} are not 1..n"
            )));
        }
        let list = RankedList::new(method, entries.into_iter().map(|(_, e)| e).collect())?;
        out.insert((query, method), list);
    }
    Ok(out)
}
