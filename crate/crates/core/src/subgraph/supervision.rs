//! Distant supervision: bridge concepts and shortest-path positive triples.

use std::collections::BTreeSet;

use serde::Serialize;

use super::{Subgraph, UNREACHABLE};
use crate::kg::{ConceptId, Triple};

/// Paths enumerated per (example, bridge concept) before truncation.
pub const DEFAULT_PATH_CAP: usize = 10_000;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SupervisionSet {
    /// Bridge concepts, ascending.
    pub bridge: Vec<ConceptId>,
    /// Triples on at least one enumerated shortest source→bridge path, ascending.
    pub positives: Vec<Triple>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SupervisionReport {
    pub paths_enumerated: usize,
    /// Bridge concepts whose path enumeration hit the cap.
    pub truncated: Vec<ConceptId>,
}

/// `(C_y − C_x) ∩ V_x`, ascending.
pub fn label_bridge_concepts(subgraph: &Subgraph, targets: &[ConceptId]) -> Vec<ConceptId> {
    let bridge: BTreeSet<ConceptId> = targets
        .iter()
        .copied()
        .filter(|c| subgraph.sources().binary_search(c).is_err() && subgraph.contains(*c))
        .collect();
    bridge.into_iter().collect()
}

/// Enumerates, for every bridge concept and every source, all shortest
/// source→bridge paths over subgraph edges and collects their triples.
///
/// Shortest length is taken per source. At most `path_cap` paths are
/// enumerated per bridge concept; a capped concept is listed in the report and
/// keeps the supervision gathered so far. Bridge concepts outside the
/// subgraph are ignored.
pub fn extract_supervision_paths(
    subgraph: &Subgraph,
    bridge: &[ConceptId],
    path_cap: usize,
) -> (SupervisionSet, SupervisionReport) {
    let mut bridge_sorted: Vec<ConceptId> =
        bridge.iter().copied().filter(|&c| subgraph.contains(c)).collect();
    bridge_sorted.sort_unstable();
    bridge_sorted.dedup();
    let mut report = SupervisionReport::default();
    if bridge_sorted.is_empty() {
        return (
            SupervisionSet {
                bridge: bridge_sorted,
                positives: Vec::new(),
            },
            report,
        );
    }

    let per_source: Vec<Vec<u32>> = subgraph
        .sources()
        .iter()
        .filter_map(|&s| subgraph.local(s))
        .map(|s| subgraph.bfs(&[s]))
        .collect();

    let mut on_path = vec![false; subgraph.edges().len()];
    for &c in &bridge_sorted {
        let target = subgraph.local(c).expect("filtered to subgraph");
        let mut budget = path_cap;
        let mut capped = false;
        for dist in &per_source {
            if dist[target] == UNREACHABLE || dist[target] == 0 {
                continue;
            }
            let mut stack: Vec<usize> = Vec::new();
            let found = enumerate_back(subgraph, dist, target, &mut stack, &mut on_path, &mut budget);
            report.paths_enumerated += found;
            if budget == 0 {
                capped = true;
                break;
            }
        }
        if capped {
            report.truncated.push(c);
        }
    }

    let positives = subgraph
        .edges()
        .iter()
        .zip(&on_path)
        .filter_map(|(t, &hit)| hit.then_some(*t))
        .collect();
    (
        SupervisionSet {
            bridge: bridge_sorted,
            positives,
        },
        report,
    )
}

/// Walks predecessors one BFS layer at a time from `node` back to the source,
/// marking the edges of every completed path. Returns the number of paths.
fn enumerate_back(
    sub: &Subgraph,
    dist: &[u32],
    node: usize,
    stack: &mut Vec<usize>,
    on_path: &mut [bool],
    budget: &mut usize,
) -> usize {
    if *budget == 0 {
        return 0;
    }
    if dist[node] == 0 {
        for &e in stack.iter() {
            on_path[e] = true;
        }
        *budget -= 1;
        return 1;
    }
    let mut found = 0;
    for &e in sub.in_edges(node) {
        let pred = sub.edge_ends()[e].0;
        if dist[pred] != UNREACHABLE && dist[pred] + 1 == dist[node] {
            stack.push(e);
            found += enumerate_back(sub, dist, pred, stack, on_path, budget);
            stack.pop();
            if *budget == 0 {
                break;
            }
        }
    }
    found
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{GraphBuilder, KnowledgeGraph, RelationVocab};
    use crate::subgraph::{retrieve_subgraph, RetrievalConfig};

    fn build(edges: &[(&str, &str)]) -> KnowledgeGraph {
        let vocab = RelationVocab::conceptnet();
        let rel = vocab.id_by_name("relatedto").unwrap();
        let mut b = GraphBuilder::new(&vocab);
        for (h, t) in edges {
            b.add(h, rel, t);
        }
        b.build()
    }

    fn names(g: &KnowledgeGraph, ts: &[Triple]) -> Vec<(String, String)> {
        ts.iter()
            .map(|t| (g.surface(t.head).to_string(), g.surface(t.tail).to_string()))
            .collect()
    }

    fn sub_from(g: &KnowledgeGraph, src: &str) -> Subgraph {
        let s = g.concept_id(src).unwrap();
        retrieve_subgraph(g, &[s], RetrievalConfig::default(), None).unwrap()
    }

    #[test]
    fn chain_positives() {
        let g = build(&[("s", "a"), ("a", "c")]);
        let sub = sub_from(&g, "s");
        let c = g.concept_id("c").unwrap();
        let (sup, report) = extract_supervision_paths(&sub, &[c], DEFAULT_PATH_CAP);
        let mut got = names(&g, &sup.positives);
        got.sort();
        assert_eq!(got, vec![("a".into(), "c".into()), ("s".into(), "a".into())]);
        assert_eq!(report.paths_enumerated, 1);
    }

    #[test]
    fn diamond_positives_cover_both_paths() {
        let g = build(&[("s", "a"), ("a", "c"), ("s", "b"), ("b", "c")]);
        let sub = sub_from(&g, "s");
        let c = g.concept_id("c").unwrap();
        let (sup, report) = extract_supervision_paths(&sub, &[c], DEFAULT_PATH_CAP);
        assert_eq!(sup.positives.len(), 4);
        assert_eq!(report.paths_enumerated, 2);
        assert!(report.truncated.is_empty());

        let (capped, report) = extract_supervision_paths(&sub, &[c], 1);
        assert_eq!(capped.positives.len(), 2);
        assert_eq!(report.truncated, vec![c]);
    }

    #[test]
    fn empty_bridge() {
        let g = build(&[("s", "a")]);
        let sub = sub_from(&g, "s");
        let (sup, _) = extract_supervision_paths(&sub, &[], DEFAULT_PATH_CAP);
        assert!(sup.positives.is_empty());
    }

    #[test]
    fn per_source_shortest_paths() {
        // s1 reaches c in 1 hop, s2 in 2 hops; both contribute.
        let g = build(&[("s1", "c"), ("s2", "m"), ("m", "c")]);
        let s1 = g.concept_id("s1").unwrap();
        let s2 = g.concept_id("s2").unwrap();
        let sub = retrieve_subgraph(&g, &[s1, s2], RetrievalConfig::default(), None).unwrap();
        let c = g.concept_id("c").unwrap();
        let (sup, _) = extract_supervision_paths(&sub, &[c], DEFAULT_PATH_CAP);
        assert_eq!(sup.positives.len(), 3);
    }

    #[test]
    fn bridge_labels() {
        let g = build(&[
            ("school", "vacation"),
            ("summer", "vacation"),
            ("summertime", "far1"),
        ]);
        let id = |s: &str| g.concept_id(s).unwrap();
        let sub = retrieve_subgraph(
            &g,
            &[id("school"), id("summer")],
            RetrievalConfig::default(),
            None,
        )
        .unwrap();
        let bridge = label_bridge_concepts(&sub, &[id("summertime"), id("vacation"), id("school")]);
        assert_eq!(bridge, vec![id("vacation")]);
        assert!(label_bridge_concepts(&sub, &[id("school")]).is_empty());
        assert!(label_bridge_concepts(&sub, &[id("far1")]).is_empty());
    }
}
