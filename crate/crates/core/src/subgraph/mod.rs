//! Per-statement subgraph retrieval and distant supervision.

mod cache;
mod dataset;
mod stats;
mod supervision;

use std::collections::{HashMap, HashSet, VecDeque};

use thiserror::Error;

use crate::kg::{ConceptId, KnowledgeGraph, Triple};

pub use cache::{decode_cache, encode_cache, read_cache, write_cache, CacheError, CachedExample, CACHE_MAGIC, CACHE_VERSION};
pub use dataset::{align_example, read_dataset, DatasetError, DatasetRecord, Example};
pub use stats::{hop_requirements, HopQuery, HopStats, HopStatsConfig};
pub use supervision::{
    extract_supervision_paths, label_bridge_concepts, SupervisionReport, SupervisionSet,
    DEFAULT_PATH_CAP,
};

/// Distance value for nodes no source reaches.
pub const UNREACHABLE: u32 = u32::MAX;

pub const DEFAULT_HOP_BOUND: u32 = 3;
pub const DEFAULT_BUDGET: usize = 300;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SubgraphError {
    #[error("source concept {0} is not in the graph")]
    InvalidSource(ConceptId),
    #[error("no source concepts given")]
    NoSources,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetrievalConfig {
    pub hop_bound: u32,
    /// Nodes admitted per expansion round; `None` disables pruning.
    pub budget: Option<usize>,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            hop_bound: DEFAULT_HOP_BOUND,
            budget: Some(DEFAULT_BUDGET),
        }
    }
}

/// A pruned neighbourhood of the source concepts.
///
/// Nodes are kept in ascending id order and addressed by local index; edges
/// are every graph triple between two admitted nodes, in graph order.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgraph {
    nodes: Vec<ConceptId>,
    distances: Vec<u32>,
    edges: Vec<Triple>,
    ends: Vec<(usize, usize)>,
    out_offsets: Vec<usize>,
    in_edges: Vec<Vec<usize>>,
    sources: Vec<ConceptId>,
    hop_bound: u32,
    budget: Option<usize>,
    admitted_per_round: Vec<usize>,
}

impl Subgraph {
    /// Builds the induced subgraph on `nodes` and annotates BFS distances.
    pub fn induced(
        graph: &KnowledgeGraph,
        nodes: impl IntoIterator<Item = ConceptId>,
        sources: &[ConceptId],
        config: RetrievalConfig,
    ) -> Self {
        let mut nodes: Vec<ConceptId> = nodes.into_iter().chain(sources.iter().copied()).collect();
        nodes.sort_unstable();
        nodes.dedup();
        let member: HashSet<ConceptId> = nodes.iter().copied().collect();
        let edges: Vec<Triple> = nodes
            .iter()
            .flat_map(|&c| graph.out_edges(c).iter().copied())
            .filter(|t| member.contains(&t.tail))
            .collect();
        Self::from_parts(nodes, edges, sources.to_vec(), config, Vec::new())
    }

    /// Assembles a subgraph from stored parts; distances are recomputed.
    pub fn from_parts(
        nodes: Vec<ConceptId>,
        mut edges: Vec<Triple>,
        mut sources: Vec<ConceptId>,
        config: RetrievalConfig,
        admitted_per_round: Vec<usize>,
    ) -> Self {
        sources.sort_unstable();
        sources.dedup();
        edges.sort_unstable();
        let local: HashMap<ConceptId, usize> =
            nodes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let ends: Vec<(usize, usize)> = edges
            .iter()
            .map(|t| (local[&t.head], local[&t.tail]))
            .collect();
        let mut out_offsets = vec![0usize; nodes.len() + 1];
        let mut in_edges = vec![Vec::new(); nodes.len()];
        for (e, &(h, t)) in ends.iter().enumerate() {
            out_offsets[h + 1] += 1;
            in_edges[t].push(e);
        }
        for i in 0..nodes.len() {
            out_offsets[i + 1] += out_offsets[i];
        }
        let mut sub = Self {
            distances: vec![UNREACHABLE; nodes.len()],
            nodes,
            edges,
            ends,
            out_offsets,
            in_edges,
            sources,
            hop_bound: config.hop_bound,
            budget: config.budget,
            admitted_per_round,
        };
        let starts: Vec<usize> = sub.sources.iter().filter_map(|&s| sub.local(s)).collect();
        sub.distances = sub.bfs(&starts);
        sub
    }

    /// Multi-source BFS distances over subgraph edges.
    pub fn bfs(&self, starts: &[usize]) -> Vec<u32> {
        let mut dist = vec![UNREACHABLE; self.nodes.len()];
        let mut queue = VecDeque::new();
        for &s in starts {
            if dist[s] != 0 {
                dist[s] = 0;
                queue.push_back(s);
            }
        }
        while let Some(u) = queue.pop_front() {
            for e in self.out_edge_range(u) {
                let v = self.ends[e].1;
                if dist[v] == UNREACHABLE {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[ConceptId] {
        &self.nodes
    }

    pub fn distances(&self) -> &[u32] {
        &self.distances
    }

    pub fn edges(&self) -> &[Triple] {
        &self.edges
    }

    /// Local (head, tail) indices per edge.
    pub fn edge_ends(&self) -> &[(usize, usize)] {
        &self.ends
    }

    pub fn out_edge_range(&self, local: usize) -> std::ops::Range<usize> {
        self.out_offsets[local]..self.out_offsets[local + 1]
    }

    pub fn in_edges(&self, local: usize) -> &[usize] {
        &self.in_edges[local]
    }

    pub fn sources(&self) -> &[ConceptId] {
        &self.sources
    }

    pub fn hop_bound(&self) -> u32 {
        self.hop_bound
    }

    pub fn budget(&self) -> Option<usize> {
        self.budget
    }

    pub fn admitted_per_round(&self) -> &[usize] {
        &self.admitted_per_round
    }

    pub fn local(&self, c: ConceptId) -> Option<usize> {
        self.nodes.binary_search(&c).ok()
    }

    pub fn contains(&self, c: ConceptId) -> bool {
        self.local(c).is_some()
    }

    pub fn distance(&self, c: ConceptId) -> Option<u32> {
        self.local(c).map(|i| self.distances[i])
    }

    pub fn is_source(&self, local: usize) -> bool {
        self.distances[local] == 0
    }

    pub fn edge_index(&self, t: &Triple) -> Option<usize> {
        self.edges.binary_search(t).ok()
    }
}

/// Retrieves the subgraph of an aligned example and labels its supervision.
///
/// Bridge concepts are the union over all explanations.
pub fn prepare_example(
    graph: &KnowledgeGraph,
    example: Example,
    config: RetrievalConfig,
    node_filter: Option<&HashSet<ConceptId>>,
    path_cap: usize,
) -> Result<CachedExample, SubgraphError> {
    let subgraph = retrieve_subgraph(graph, &example.sources, config, node_filter)?;
    let bridge = label_bridge_concepts(&subgraph, &example.target_union());
    let (supervision, report) = extract_supervision_paths(&subgraph, &bridge, path_cap);
    Ok(CachedExample {
        example,
        subgraph,
        supervision,
        report,
    })
}

/// Bounded multi-hop expansion from `sources`.
///
/// Each round ranks every neighbour outside the current node set (and inside
/// `node_filter`, when given) by the number of distinct current nodes adjacent
/// to it, then admits the top `budget` by (count desc, id asc). The result is
/// the induced subgraph on all admitted nodes.
pub fn retrieve_subgraph(
    graph: &KnowledgeGraph,
    sources: &[ConceptId],
    config: RetrievalConfig,
    node_filter: Option<&HashSet<ConceptId>>,
) -> Result<Subgraph, SubgraphError> {
    if sources.is_empty() {
        return Err(SubgraphError::NoSources);
    }
    if let Some(&bad) = sources.iter().find(|&&s| !graph.contains(s)) {
        return Err(SubgraphError::InvalidSource(bad));
    }
    let passes = |c: &ConceptId| node_filter.is_none_or(|f| f.contains(c));

    let mut members: HashSet<ConceptId> = sources.iter().copied().collect();
    let mut visits: HashMap<ConceptId, u32> = HashMap::new();
    let mut scratch: Vec<ConceptId> = Vec::new();
    let mut record_visits = |node: ConceptId, members: &HashSet<ConceptId>, visits: &mut HashMap<ConceptId, u32>| {
        scratch.clear();
        scratch.extend(graph.out_edges(node).iter().map(|t| t.tail));
        scratch.sort_unstable();
        scratch.dedup();
        for tail in &scratch {
            if !members.contains(tail) && passes(tail) {
                *visits.entry(*tail).or_default() += 1;
            }
        }
    };
    for &s in &members.clone() {
        record_visits(s, &members, &mut visits);
    }

    let mut admitted_per_round = Vec::new();
    for _ in 0..config.hop_bound {
        if visits.is_empty() {
            break;
        }
        let mut ranked: Vec<(ConceptId, u32)> = visits.iter().map(|(&c, &n)| (c, n)).collect();
        let order = |a: &(ConceptId, u32), b: &(ConceptId, u32)| b.1.cmp(&a.1).then(a.0.cmp(&b.0));
        let take = config.budget.unwrap_or(usize::MAX).min(ranked.len());
        if take < ranked.len() {
            if take > 0 {
                ranked.select_nth_unstable_by(take - 1, order);
            }
            ranked.truncate(take);
        }
        ranked.sort_unstable_by(order);
        for &(c, _) in &ranked {
            visits.remove(&c);
            members.insert(c);
        }
        for &(c, _) in &ranked {
            record_visits(c, &members, &mut visits);
        }
        admitted_per_round.push(ranked.len());
    }

    let mut sub = Subgraph::induced(graph, members, sources, config);
    sub.admitted_per_round = admitted_per_round;
    Ok(sub)
}
