//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use volret::ann::SliceFilter;
use volret::corpus::{Corpus, VolumeRecord};

pub fn dot64(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += f64::from(a[i]) * f64::from(b[i]);
    }
    s
}

/// `(volume_id, slice, score)` of the `k` best index slices for `q`.
pub fn knn_oracle(
    database: &[&VolumeRecord],
    filter: &SliceFilter,
    q: &[f32],
    k: usize,
    exclude: Option<&str>,
) -> Vec<(String, u32, f64)> {
    let mut all = Vec::new();
    for v in database {
        if Some(v.volume_id.as_str()) == exclude {
            continue;
        }
        for s in filter.select(v) {
            all.push((v.volume_id.clone(), s as u32, dot64(q, v.slice_embedding(s))));
        }
    }
    all.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap()
            .then_with(|| a.0.cmp(&b.0))
            .then_with(|| a.1.cmp(&b.1))
    });
    all.truncate(k);
    all
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleStats {
    pub count: u32,
    pub max: f64,
    pub sum: f64,
}

pub fn hit_table_oracle(
    database: &[&VolumeRecord],
    index_filter: &SliceFilter,
    query: &VolumeRecord,
    query_filter: &SliceFilter,
    k: usize,
) -> BTreeMap<String, OracleStats> {
    let mut table: BTreeMap<String, OracleStats> = BTreeMap::new();
    for s in query_filter.select(query) {
        let hits = knn_oracle(
            database,
            index_filter,
            query.slice_embedding(s),
            k,
            Some(&query.volume_id),
        );
        for (id, _, score) in hits {
            let e = table.entry(id).or_insert(OracleStats {
                count: 0,
                max: f64::NEG_INFINITY,
                sum: 0.0,
            });
            e.count += 1;
            e.max = e.max.max(score);
            e.sum += score;
        }
    }
    table
}

/// The three aggregations, each as `(id, score)` best first.
pub fn rank_oracle(table: &BTreeMap<String, OracleStats>, method: &str, m: usize) -> Vec<(String, f64)> {
    let mut rows: Vec<(&String, &OracleStats)> = table.iter().collect();
    rows.sort_by(|(ia, a), (ib, b)| {
        let primary = match method {
            "count_base" => b.count.cmp(&a.count).then(b.sum.partial_cmp(&a.sum).unwrap()),
            "max_score" => b.max.partial_cmp(&a.max).unwrap().then(b.count.cmp(&a.count)),
            "sum_sim" => b.sum.partial_cmp(&a.sum).unwrap().then(b.count.cmp(&a.count)),
            other => panic!("unknown method {other}"),
        };
        primary.then_with(|| ia.cmp(ib))
    });
    rows.into_iter()
        .take(m)
        .map(|(id, s)| {
            let score = match method {
                "count_base" => f64::from(s.count),
                "max_score" => s.max,
                _ => s.sum,
            };
            (id.clone(), score)
        })
        .collect()
}

/// `Σᵢ maxⱼ ⟨qᵢ, cⱼ⟩` by two plain loops.
pub fn cmir_oracle(q: &[f32], c: &[f32], dim: usize) -> f64 {
    let mut total = 0.0;
    for qi in q.chunks_exact(dim) {
        let mut best = f64::NEG_INFINITY;
        for cj in c.chunks_exact(dim) {
            best = best.max(dot64(qi, cj));
        }
        total += best;
    }
    total
}

/// `Σ 1/(k + rank)` over every list containing the id, by direct enumeration.
pub fn rrf_oracle(lists: &[Vec<String>], k: u32) -> Vec<(String, f64)> {
    let mut ids: Vec<&String> = lists.iter().flatten().collect();
    ids.sort();
    ids.dedup();
    let mut out: Vec<(String, f64)> = ids
        .into_iter()
        .map(|id| {
            let mut ranks: Vec<usize> = lists
                .iter()
                .filter_map(|l| l.iter().position(|x| x == id).map(|p| p + 1))
                .collect();
            ranks.sort();
            let score = ranks.iter().map(|&r| 1.0 / (f64::from(k) + r as f64)).sum();
            (id.clone(), score)
        })
        .collect();
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    out
}

/// Two-sided exact signed-rank p-value by listing all 2^m sign patterns.
pub fn wilcoxon_oracle(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let m = d.len();
    if m == 0 {
        return 1.0;
    }
    // Average ranks of |d| (doubled to stay integral).
    let mut ranks = vec![0u64; m];
    for i in 0..m {
        let less = d.iter().filter(|x| x.abs() < d[i].abs()).count() as u64;
        let equal = d.iter().filter(|x| x.abs() == d[i].abs()).count() as u64;
        ranks[i] = 2 * less + equal + 1;
    }
    let total: u64 = ranks.iter().sum();
    let stat = |plus: u64| plus.min(total - plus);
    let observed: u64 = (0..m).filter(|&i| d[i] > 0.0).map(|i| ranks[i]).sum();
    let w = stat(observed);
    let mut hits = 0u64;
    for mask in 0u64..(1 << m) {
        let plus: u64 = (0..m).filter(|&i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if stat(plus) <= w {
            hits += 1;
        }
    }
    (hits as f64 / (1u64 << m) as f64).min(1.0)
}

pub fn corpus_refs(corpus: &Corpus) -> Vec<&VolumeRecord> {
    corpus.volumes().collect()
}
