use std::cmp::Ordering;

use crate::subgraph::{Subgraph, UNREACHABLE};

/// Edges `u → v` with `d_v = d_u + 1`, grouped by tail (local index).
fn monotone_in_edges(sub: &Subgraph) -> Vec<Vec<usize>> {
    let dist = sub.distances();
    let ends = sub.edge_ends();
    (0..sub.len())
        .map(|v| {
            sub.in_edges(v)
                .iter()
                .copied()
                .filter(|&e| {
                    let u = ends[e].0;
                    dist[u] != UNREACHABLE && dist[v] != UNREACHABLE && dist[u] + 1 == dist[v]
                })
                .collect()
        })
        .collect()
}

/// Local indices of reachable nodes ordered by distance, then index.
fn by_distance(sub: &Subgraph) -> Vec<usize> {
    let dist = sub.distances();
    let mut order: Vec<usize> = (0..sub.len()).filter(|&v| dist[v] != UNREACHABLE).collect();
    order.sort_by_key(|&v| (dist[v], v));
    order
}

/// Routing score per local node: the mean, over all monotone paths from a
/// source, of the mean triple probability along the path.
///
/// With `N(c)` paths reaching `c` and `S(c)` the sum over those paths of
/// their summed probabilities, `s(c) = S(c) / (N(c) · d_c)`. Sources and
/// nodes without monotone paths score 0.
pub fn route_paths(sub: &Subgraph, triple_prob: &[f64]) -> Vec<f64> {
    assert_eq!(triple_prob.len(), sub.edges().len());
    let n = sub.len();
    let dist = sub.distances();
    let ends = sub.edge_ends();
    let incoming = monotone_in_edges(sub);
    let mut count = vec![0.0f64; n];
    let mut sum = vec![0.0f64; n];
    let mut score = vec![0.0f64; n];
    for v in by_distance(sub) {
        if dist[v] == 0 {
            count[v] = 1.0;
            continue;
        }
        let (mut nv, mut sv) = (0.0, 0.0);
        for &e in &incoming[v] {
            let u = ends[e].0;
            nv += count[u];
            sv += sum[u] + count[u] * triple_prob[e];
        }
        count[v] = nv;
        sum[v] = sv;
        if nv > 0.0 {
            score[v] = sv / (nv * dist[v] as f64);
        }
    }
    score
}

/// A monotone path as subgraph edge indices from a source outward.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPath {
    pub edges: Vec<usize>,
    /// Mean triple probability along the path.
    pub score: f64,
}

/// The `k` best monotone paths into every local node, best first; ties go to
/// the lexicographically smaller edge sequence. Sources get no paths.
pub fn top_paths(sub: &Subgraph, triple_prob: &[f64], k: usize) -> Vec<Vec<ScoredPath>> {
    assert_eq!(triple_prob.len(), sub.edges().len());
    let dist = sub.distances();
    let ends = sub.edge_ends();
    let incoming = monotone_in_edges(sub);
    // (summed probability, edges)
    let mut best: Vec<Vec<(f64, Vec<usize>)>> = vec![Vec::new(); sub.len()];
    for v in by_distance(sub) {
        if dist[v] == 0 {
            best[v] = vec![(0.0, Vec::new())];
            continue;
        }
        let mut cands: Vec<(f64, Vec<usize>)> = Vec::new();
        for &e in &incoming[v] {
            for (s, path) in &best[ends[e].0] {
                let mut p = path.clone();
                p.push(e);
                cands.push((s + triple_prob[e], p));
            }
        }
        cands.sort_by(|a, b| match b.0.total_cmp(&a.0) {
            Ordering::Equal => a.1.cmp(&b.1),
            o => o,
        });
        cands.truncate(k);
        best[v] = cands;
    }
    best.into_iter()
        .enumerate()
        .map(|(v, paths)| {
            if dist[v] == 0 || dist[v] == UNREACHABLE {
                return Vec::new();
            }
            paths
                .into_iter()
                .map(|(s, edges)| ScoredPath {
                    score: s / dist[v] as f64,
                    edges,
                })
                .collect()
        })
        .collect()
}
