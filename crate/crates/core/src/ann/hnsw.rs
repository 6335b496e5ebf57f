//! Hierarchical Navigable Small World graph over the vectors of a [`SliceIndex`].
//!
//! Nodes are inserted in index order with levels drawn from a seeded RNG, so
//! a given (corpus, filter, config) always produces the same graph. Neighbor
//! lists use the diversity heuristic with pruned candidates topped back up to
//! the degree bound.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Scored, SliceIndex};
use crate::linalg::dot;

/// Max-heap entry ordered by score, then by lower node id.
#[derive(Clone, Copy, PartialEq)]
struct Near(Scored);

impl Eq for Near {}

impl Ord for Near {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .score
            .total_cmp(&other.0.score)
            .then_with(|| other.0.node.cmp(&self.0.node))
    }
}

impl PartialOrd for Near {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Min-heap entry: the worst result sits on top.
#[derive(Clone, Copy, PartialEq, Eq)]
struct Far(Near);

impl Ord for Far {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.cmp(&self.0)
    }
}

impl PartialOrd for Far {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Visited {
    bits: Vec<u64>,
}

impl Visited {
    fn new(n: usize) -> Self {
        Visited {
            bits: vec![0; n.div_ceil(64)],
        }
    }

    /// Marks `node`; returns false if it was already marked.
    fn insert(&mut self, node: u32) -> bool {
        let (w, b) = (node as usize / 64, node as usize % 64);
        let fresh = self.bits[w] & (1 << b) == 0;
        self.bits[w] |= 1 << b;
        fresh
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Hnsw {
    pub(crate) entry: u32,
    pub(crate) max_level: usize,
    /// `links[node][layer]`; a node at level `l` has `l + 1` lists.
    pub(crate) links: Vec<Vec<Vec<u32>>>,
}

impl Hnsw {
    pub(crate) fn build(index: &SliceIndex) -> Self {
        let cfg = index.config();
        let m = cfg.m;
        let level_mult = 1.0 / (m as f64).ln();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let n = index.len();

        let mut graph = Hnsw {
            entry: 0,
            max_level: 0,
            links: Vec::with_capacity(n),
        };
        for node in 0..n as u32 {
            let u: f64 = 1.0 - rng.random::<f64>();
            let level = (-u.ln() * level_mult).floor() as usize;
            graph.links.push(vec![Vec::new(); level + 1]);
            if node == 0 {
                graph.max_level = level;
                continue;
            }
            graph.insert(index, node, level, cfg.ef_construction, m);
        }
        graph
    }

    fn insert(&mut self, index: &SliceIndex, node: u32, level: usize, ef_construction: usize, m: usize) {
        let q = index.vector(node);
        let mut ep = vec![self.scored(index, q, self.entry)];
        for layer in (level + 1..=self.max_level).rev() {
            ep = self.search_layer(index, q, &ep, 1, layer);
        }
        for layer in (0..=level.min(self.max_level)).rev() {
            let found = self.search_layer(index, q, &ep, ef_construction, layer);
            let bound = if layer == 0 { 2 * m } else { m };
            let chosen = select_neighbors(index, &found, bound);
            self.links[node as usize][layer] = chosen.iter().map(|s| s.node).collect();
            for s in &chosen {
                self.link(index, s.node, node, layer, bound);
            }
            ep = found;
        }
        if level > self.max_level {
            self.max_level = level;
            self.entry = node;
        }
    }

    /// Adds `to` to `from`'s list on `layer`, shrinking it if over `bound`.
    fn link(&mut self, index: &SliceIndex, from: u32, to: u32, layer: usize, bound: usize) {
        let list = &mut self.links[from as usize][layer];
        list.push(to);
        if list.len() <= bound {
            return;
        }
        let base = index.vector(from);
        let mut cands: Vec<Scored> = list
            .iter()
            .map(|&n| Scored {
                node: n,
                score: dot(base, index.vector(n)),
            })
            .collect();
        cands.sort_by(|a, b| Near(*b).cmp(&Near(*a)));
        let kept = select_neighbors(index, &cands, bound);
        self.links[from as usize][layer] = kept.into_iter().map(|s| s.node).collect();
    }

    fn scored(&self, index: &SliceIndex, q: &[f32], node: u32) -> Scored {
        Scored {
            node,
            score: dot(q, index.vector(node)),
        }
    }

    /// Beam search on one layer. Returns up to `ef` nodes, best first.
    fn search_layer(&self, index: &SliceIndex, q: &[f32], entry: &[Scored], ef: usize, layer: usize) -> Vec<Scored> {
        let mut visited = Visited::new(self.links.len());
        let mut candidates: BinaryHeap<Near> = BinaryHeap::new();
        let mut results: BinaryHeap<Far> = BinaryHeap::new();
        for &e in entry {
            if visited.insert(e.node) {
                candidates.push(Near(e));
                results.push(Far(Near(e)));
            }
        }
        while results.len() > ef {
            results.pop();
        }
        while let Some(Near(c)) = candidates.pop() {
            let worst = results.peek().map(|f| f.0 .0);
            if let Some(w) = worst {
                if results.len() >= ef && Near(c) < Near(w) {
                    break;
                }
            }
            let Some(neighbors) = self.links[c.node as usize].get(layer) else {
                continue;
            };
            for &nb in neighbors {
                if !visited.insert(nb) {
                    continue;
                }
                let s = self.scored(index, q, nb);
                let admit = results.len() < ef || results.peek().is_some_and(|f| Near(s) > f.0);
                if admit {
                    candidates.push(Near(s));
                    results.push(Far(Near(s)));
                    if results.len() > ef {
                        results.pop();
                    }
                }
            }
        }
        let mut out: Vec<Scored> = results.into_iter().map(|f| f.0 .0).collect();
        out.sort_by(|a, b| Near(*b).cmp(&Near(*a)));
        out
    }

    pub(crate) fn search(&self, index: &SliceIndex, q: &[f32], ef: usize) -> Vec<Scored> {
        let mut ep = vec![self.scored(index, q, self.entry)];
        for layer in (1..=self.max_level).rev() {
            ep = self.search_layer(index, q, &ep, 1, layer);
        }
        self.search_layer(index, q, &ep, ef, 0)
    }
}

/// Diversity heuristic: keep a candidate only if it is closer to the base
/// than to every neighbor already kept; fill remaining slots with the best
/// discarded candidates. `cands` must be sorted best first.
fn select_neighbors(index: &SliceIndex, cands: &[Scored], bound: usize) -> Vec<Scored> {
    if cands.len() <= bound {
        return cands.to_vec();
    }
    let mut kept: Vec<Scored> = Vec::with_capacity(bound);
    let mut pruned: Vec<Scored> = Vec::new();
    for &c in cands {
        if kept.len() >= bound {
            break;
        }
        let v = index.vector(c.node);
        let diverse = kept.iter().all(|k| dot(v, index.vector(k.node)) < c.score);
        if diverse {
            kept.push(c);
        } else {
            pruned.push(c);
        }
    }
    for p in pruned {
        if kept.len() >= bound {
            break;
        }
        kept.push(p);
    }
    kept
}
