use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Task};
use crate::error::{Error, Result};
use crate::retrieval::RankedList;

use super::relevance::{is_relevant, RelevanceTask};

/// Depth of the average-precision window.
pub const AP_DEPTH: usize = 10;

/// Fraction of relevant entries among the first `k`. Lists shorter than `k`
/// count the missing positions as irrelevant.
pub fn precision_at_k(relevance: &[bool], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Input("precision cut-off k must be positive".into()));
    }
    let hits = relevance.iter().take(k).filter(|&&r| r).count();
    Ok(hits as f64 / k as f64)
}

/// `AP = Σₙ (Rₙ − Rₙ₋₁)·Pₙ` over the first ten positions, where recall is
/// relative to the relevant entries inside that window. Zero when none are.
pub fn average_precision(relevance: &[bool]) -> f64 {
    let window = &relevance[..relevance.len().min(AP_DEPTH)];
    let total = window.iter().filter(|&&r| r).count();
    if total == 0 {
        return 0.0;
    }
    let mut ap = 0.0;
    let mut found = 0usize;
    let mut prev_recall = 0.0;
    for (n, &rel) in window.iter().enumerate() {
        if rel {
            found += 1;
        }
        let recall = found as f64 / total as f64;
        let precision = found as f64 / (n + 1) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}

/// P@3, P@5, P@10 and AP of one ranked list (or their means).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub p_at_3: f64,
    pub p_at_5: f64,
    pub p_at_10: f64,
    pub ap: f64,
}

impl MetricReport {
    pub fn from_relevance(relevance: &[bool]) -> Self {
        // k is a positive constant; precision_at_k cannot fail here.
        let p = |k| precision_at_k(relevance, k).unwrap_or(0.0);
        MetricReport {
            p_at_3: p(3),
            p_at_5: p(5),
            p_at_10: p(10),
            ap: average_precision(relevance),
        }
    }

    pub fn mean<'a>(reports: impl IntoIterator<Item = &'a MetricReport>) -> MetricReport {
        let mut acc = MetricReport::default();
        let mut n = 0usize;
        for r in reports {
            acc.p_at_3 += r.p_at_3;
            acc.p_at_5 += r.p_at_5;
            acc.p_at_10 += r.p_at_10;
            acc.ap += r.ap;
            n += 1;
        }
        if n > 0 {
            let n = n as f64;
            acc.p_at_3 /= n;
            acc.p_at_5 /= n;
            acc.p_at_10 /= n;
            acc.ap /= n;
        }
        acc
    }
}

/// Relevance of each entry of `list` for a query of stage `query_stage`.
/// Stages are read relative to `organ` when set (see [`crate::corpus::VolumeRecord::stage_for`]).
pub fn relevance_vector(
    list: &RankedList,
    corpus: &Corpus,
    query_stage: u8,
    organ: Option<Task>,
    task: RelevanceTask,
) -> Result<Vec<bool>> {
    list.ids()
        .map(|id| {
            let v = corpus.require(id)?;
            Ok(is_relevant(task, query_stage, v.stage_for(organ)))
        })
        .collect()
}
