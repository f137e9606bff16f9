//! Hop-requirement and unpruned subgraph-size statistics over a corpus.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use serde::Serialize;

use crate::kg::{ConceptId, KnowledgeGraph};

/// One example's source concepts and explanation concepts.
#[derive(Debug, Clone, Default)]
pub struct HopQuery {
    pub sources: Vec<ConceptId>,
    pub targets: Vec<ConceptId>,
}

#[derive(Debug, Clone)]
pub struct HopStatsConfig {
    /// Subgraph sizes are reported for 1..=size_hops.
    pub size_hops: u32,
    /// Distances beyond this depth count as unreachable; `None` searches the
    /// whole connected component.
    pub max_depth: Option<u32>,
    /// Restricts the concepts counted (and traversed) by the size table.
    pub size_filter: Option<HashSet<ConceptId>>,
}

impl Default for HopStatsConfig {
    fn default() -> Self {
        Self {
            size_hops: 3,
            max_depth: None,
            size_filter: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct HopStats {
    /// Per unique explanation concept: minimum hops from any source → count.
    pub concept_histogram: BTreeMap<u32, usize>,
    pub concept_unreachable: usize,
    /// Per example: hops needed to reach all of its reachable unique concepts.
    pub example_histogram: BTreeMap<u32, usize>,
    pub example_unreachable: usize,
    /// Examples without sources or without unique explanation concepts.
    pub examples_skipped: usize,
    /// Mean unpruned node count within h hops, for h = 1..=size_hops.
    pub mean_nodes_by_hop: Vec<f64>,
    pub examples_sized: usize,
}

impl HopStats {
    /// Fraction of reachable unique concepts needing at most `hops` hops.
    pub fn concept_fraction_within(&self, hops: u32) -> f64 {
        fraction_within(&self.concept_histogram, hops)
    }

    pub fn example_fraction_within(&self, hops: u32) -> f64 {
        fraction_within(&self.example_histogram, hops)
    }
}

fn fraction_within(hist: &BTreeMap<u32, usize>, hops: u32) -> f64 {
    let total: usize = hist.values().sum();
    if total == 0 {
        return 0.0;
    }
    let within: usize = hist.range(..=hops).map(|(_, n)| n).sum();
    within as f64 / total as f64
}

/// Multi-source BFS over the full graph; returns distance per visited node.
fn bfs_layers(
    graph: &KnowledgeGraph,
    sources: &[ConceptId],
    max_depth: Option<u32>,
    filter: Option<&HashSet<ConceptId>>,
    mut stop: impl FnMut(&HashMap<ConceptId, u32>) -> bool,
) -> HashMap<ConceptId, u32> {
    let mut dist: HashMap<ConceptId, u32> = HashMap::new();
    let mut queue = VecDeque::new();
    for &s in sources {
        if graph.contains(s) && dist.insert(s, 0).is_none() {
            queue.push_back(s);
        }
    }
    let mut depth = 0;
    while let Some(u) = queue.pop_front() {
        let du = dist[&u];
        if du > depth {
            depth = du;
            if stop(&dist) {
                break;
            }
        }
        if max_depth.is_some_and(|m| du >= m) {
            continue;
        }
        for t in graph.out_edges(u) {
            if filter.is_some_and(|f| !f.contains(&t.tail)) {
                continue;
            }
            if let std::collections::hash_map::Entry::Vacant(v) = dist.entry(t.tail) {
                v.insert(du + 1);
                queue.push_back(t.tail);
            }
        }
    }
    dist
}

/// Minimum hop distances from sources to unique explanation concepts
/// (`targets − sources`), aggregated per concept and per example, plus mean
/// unpruned subgraph sizes per hop count.
pub fn hop_requirements(
    graph: &KnowledgeGraph,
    queries: &[HopQuery],
    config: &HopStatsConfig,
) -> HopStats {
    let mut stats = HopStats {
        mean_nodes_by_hop: vec![0.0; config.size_hops as usize],
        ..HopStats::default()
    };
    for q in queries {
        let sources: Vec<ConceptId> = q.sources.iter().copied().filter(|&s| graph.contains(s)).collect();
        if sources.is_empty() {
            stats.examples_skipped += 1;
            continue;
        }
        let source_set: HashSet<ConceptId> = sources.iter().copied().collect();
        let mut unique: Vec<ConceptId> = q
            .targets
            .iter()
            .copied()
            .filter(|c| !source_set.contains(c))
            .collect();
        unique.sort_unstable();
        unique.dedup();

        // sizes: BFS restricted to the filter, up to size_hops
        let sized = bfs_layers(
            graph,
            &sources,
            Some(config.size_hops),
            config.size_filter.as_ref(),
            |_| false,
        );
        let mut per_hop = vec![0usize; config.size_hops as usize + 1];
        for &d in sized.values() {
            per_hop[d as usize] += 1;
        }
        let mut cumulative = per_hop[0];
        for h in 1..=config.size_hops as usize {
            cumulative += per_hop[h];
            stats.mean_nodes_by_hop[h - 1] += cumulative as f64;
        }
        stats.examples_sized += 1;

        if unique.is_empty() {
            stats.examples_skipped += 1;
            continue;
        }
        let dist = bfs_layers(graph, &sources, config.max_depth, None, |d| {
            unique.iter().all(|c| d.contains_key(c))
        });
        let mut worst: Option<u32> = None;
        for c in &unique {
            match dist.get(c) {
                Some(&h) => {
                    *stats.concept_histogram.entry(h).or_default() += 1;
                    worst = Some(worst.map_or(h, |w| w.max(h)));
                }
                None => stats.concept_unreachable += 1,
            }
        }
        match worst {
            Some(h) => *stats.example_histogram.entry(h).or_default() += 1,
            None => stats.example_unreachable += 1,
        }
    }
    if stats.examples_sized > 0 {
        for m in &mut stats.mean_nodes_by_hop {
            *m /= stats.examples_sized as f64;
        }
    }
    stats
}
