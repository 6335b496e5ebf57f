//! Reciprocal Rank Fusion of the three hit-table rankings.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::retrieval::{Method, RankedEntry, RankedList};

/// Smoothing constant used unless configured otherwise.
pub const DEFAULT_RRF_K: u32 = 60;

/// Fuses three lists with `RRF(V) = Σ 1 / (k + rank(V, L))`, ranks 1-based.
/// A list that does not contain `V` contributes nothing. Output is sorted by
/// fused score descending, ties by volume id.
pub fn rrf_fuse(lists: [&RankedList; 3], k: u32) -> Result<RankedList> {
    let mut ranks: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for list in lists {
        let mut seen = BTreeSet::new();
        for (pos, id) in list.ids().enumerate() {
            if !seen.insert(id) {
                return Err(Error::Input(format!(
                    "volume {id} appears twice in the {} list",
                    list.method()
                )));
            }
            ranks.entry(id).or_default().push(pos + 1);
        }
    }
    let mut entries: Vec<RankedEntry> = ranks
        .into_iter()
        .map(|(id, mut r)| {
            // Summing in rank order makes the score independent of list order.
            r.sort_unstable();
            let score = r.iter().map(|&rank| 1.0 / (f64::from(k) + rank as f64)).sum();
            RankedEntry {
                volume_id: id.to_owned(),
                score,
            }
        })
        .collect();
    entries.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.volume_id.cmp(&b.volume_id)));
    RankedList::new(Method::Rrf, entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(method: Method, ids: &[&str]) -> RankedList {
        let n = ids.len();
        RankedList::new(
            method,
            ids.iter()
                .enumerate()
                .map(|(i, id)| RankedEntry {
                    volume_id: (*id).to_owned(),
                    score: (n - i) as f64,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn first_everywhere_scores_three_over_61() {
        let a = list(Method::CountBase, &["x", "y"]);
        let b = list(Method::MaxScore, &["x", "z"]);
        let c = list(Method::SumSim, &["x"]);
        let fused = rrf_fuse([&a, &b, &c], DEFAULT_RRF_K).unwrap();
        assert_eq!(fused.entries()[0].volume_id, "x");
        assert!((fused.entries()[0].score - 3.0 / 61.0).abs() < 1e-12);
    }

    #[test]
    fn absent_lists_contribute_nothing() {
        let ids: Vec<String> = (0..20).map(|i| format!("v{i:02}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let a = list(Method::CountBase, &refs);
        let b = list(Method::MaxScore, &[]);
        let c = list(Method::SumSim, &[]);
        let fused = rrf_fuse([&a, &b, &c], 60).unwrap();
        let last = fused.entries().iter().find(|e| e.volume_id == "v19").unwrap();
        assert!((last.score - 0.0125).abs() < 1e-15);
    }

    #[test]
    fn ties_break_by_id_regardless_of_list_order() {
        let a = list(Method::CountBase, &["b", "a"]);
        let b = list(Method::MaxScore, &["a", "b"]);
        let c = list(Method::SumSim, &["c"]);
        let f1 = rrf_fuse([&a, &b, &c], 60).unwrap();
        let f2 = rrf_fuse([&b, &c, &a], 60).unwrap();
        assert_eq!(f1, f2);
        let ids: Vec<&str> = f1.ids().collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }
}
