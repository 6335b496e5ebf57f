use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of non-zero pairs handled by the exact null distribution.
pub const MAX_EXACT_PAIRS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Pairs supplied.
    pub n: usize,
    /// Pairs left after dropping zero differences.
    pub m: usize,
    pub w_plus: f64,
    pub w_minus: f64,
    /// `min(W⁺, W⁻)`.
    pub statistic: f64,
    pub p_value: f64,
    /// Every difference was zero; `p_value` is 1 by convention.
    pub degenerate: bool,
}

/// Exact two-sided Wilcoxon signed-rank test of paired samples `a` and `b`.
///
/// Zero differences are dropped, tied magnitudes share their average rank,
/// and the p-value is the share of the 2^m sign assignments whose statistic
/// is at most the observed one.
pub fn wilcoxon_signed_rank_two_sided(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::Input(format!(
            "paired samples differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let mut diffs = Vec::with_capacity(a.len());
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        if !d.is_finite() {
            return Err(Error::Input("paired samples must be finite".into()));
        }
        if d != 0.0 {
            diffs.push(d);
        }
    }
    let m = diffs.len();
    if m == 0 {
        return Ok(WilcoxonResult {
            n: a.len(),
            m: 0,
            w_plus: 0.0,
            w_minus: 0.0,
            statistic: 0.0,
            p_value: 1.0,
            degenerate: true,
        });
    }
    if m > MAX_EXACT_PAIRS {
        return Err(Error::Input(format!(
            "{m} non-zero pairs exceed the exact test limit of {MAX_EXACT_PAIRS}"
        )));
    }

    let ranks = doubled_ranks(&diffs);
    let total: u64 = ranks.iter().sum();
    let plus: u64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let minus = total - plus;
    let w = plus.min(minus);

    // dist[s] = probability that a random sign assignment has W⁺ = s/2.
    let mut dist = vec![0.0f64; total as usize + 1];
    dist[0] = 1.0;
    let mut reach = 0usize;
    for &r in &ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            let p = dist[s] * 0.5;
            dist[s] = p;
            dist[s + r] += p;
        }
        reach += r;
    }
    let p: f64 = dist
        .iter()
        .enumerate()
        .filter(|&(s, _)| {
            let s = s as u64;
            s.min(total - s) <= w
        })
        .map(|(_, &p)| p)
        .sum();

    Ok(WilcoxonResult {
        n: a.len(),
        m,
        w_plus: plus as f64 / 2.0,
        w_minus: minus as f64 / 2.0,
        statistic: w as f64 / 2.0,
        p_value: p.min(1.0),
        degenerate: false,
    })
}

/// Ranks of `|d|` multiplied by two so averaged ties stay integral.
fn doubled_ranks(diffs: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..diffs.len()).collect();
    order.sort_by(|&i, &j| diffs[i].abs().total_cmp(&diffs[j].abs()));
    let mut ranks = vec![0u64; diffs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && diffs[order[end]].abs() == diffs[order[start]].abs() {
            end += 1;
        }
        // Ranks start+1..=end averaged, times two.
        let doubled = (start + 1 + end) as u64;
        for &i in &order[start..end] {
            ranks[i] = doubled;
        }
        start = end;
    }
    ranks
}
