//! Independent reference implementations shared by the integration and
//! acceptance suites.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet};

use bridgekg::encoder::{ModelConfig, ModelParams};
use bridgekg::extractor::{forward, EncodedExample};
use bridgekg::kg::{ConceptId, GraphBuilder, KnowledgeGraph, RelationId, RelationVocab, Triple, RELATION_COUNT};
use bridgekg::subgraph::{RetrievalConfig, Subgraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random triples over `n` nodes with relation ids below `rels`.
pub fn random_triples(rng: &mut ChaCha8Rng, n: u32, edges: usize, rels: u8) -> Vec<Triple> {
    let mut out = BTreeSet::new();
    for _ in 0..edges {
        let h = rng.random_range(0..n);
        let t = rng.random_range(0..n);
        if h != t {
            out.insert(Triple::new(ConceptId(h), RelationId(rng.random_range(0..rels)), ConceptId(t)));
        }
    }
    out.into_iter().collect()
}

/// A reverse-closed graph on 2..=`max_nodes` concepts named `n0`, `n1`, ...
pub fn random_graph(seed: u64, max_nodes: u32) -> KnowledgeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=max_nodes);
    let edges = rng.random_range(0..=3 * n as usize);
    let vocab = RelationVocab::conceptnet();
    let mut b = GraphBuilder::new(&vocab);
    let ids: Vec<ConceptId> = (0..n).map(|i| b.concept(&format!("n{i}"))).collect();
    for t in random_triples(&mut rng, n, edges, RELATION_COUNT as u8) {
        b.add_triple(ids[t.head.index()], t.rel, ids[t.tail.index()]);
    }
    b.build()
}

/// One to three distinct source concepts.
pub fn random_sources(seed: u64, graph: &KnowledgeGraph) -> Vec<ConceptId> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let n = graph.num_concepts() as u32;
    let k = rng.random_range(1..=3.min(n));
    let set: BTreeSet<ConceptId> = (0..k).map(|_| ConceptId(rng.random_range(0..n))).collect();
    set.into_iter().collect()
}

/// A subgraph over all `n` nodes with the given edges and sources.
pub fn subgraph_of(n: u32, edges: Vec<Triple>, sources: Vec<ConceptId>) -> Subgraph {
    Subgraph::from_parts((0..n).map(ConceptId).collect(), edges, sources, RetrievalConfig::default(), Vec::new())
}

// ---------------------------------------------------------------- routing

/// Every monotone path (as edge lists) from a source into each node, found
/// by depth-first search with explicit distance checks.
pub fn enumerate_monotone_paths(sub: &Subgraph) -> Vec<Vec<Vec<usize>>> {
    let n = sub.len();
    let dist = sub.distances();
    let ends = sub.edge_ends();
    let mut out = vec![Vec::new(); n];
    fn dfs(
        v: usize,
        path: &mut Vec<usize>,
        out: &mut Vec<Vec<Vec<usize>>>,
        sub: &Subgraph,
        dist: &[u32],
        ends: &[(usize, usize)],
    ) {
        if !path.is_empty() {
            out[v].push(path.clone());
        }
        for e in sub.out_edge_range(v) {
            let w = ends[e].1;
            if dist[w] != u32::MAX && dist[w] == dist[v] + 1 {
                path.push(e);
                dfs(w, path, out, sub, dist, ends);
                path.pop();
            }
        }
    }
    for s in 0..n {
        if sub.is_source(s) && dist[s] == 0 {
            dfs(s, &mut Vec::new(), &mut out, sub, dist, ends);
        }
    }
    out
}

/// Routing by explicit enumeration: mean over paths of the path mean.
pub fn routing_by_enumeration(sub: &Subgraph, prob: &[f64]) -> Vec<f64> {
    enumerate_monotone_paths(sub)
        .into_iter()
        .enumerate()
        .map(|(v, paths)| {
            if paths.is_empty() || sub.is_source(v) {
                return 0.0;
            }
            let means: Vec<f64> = paths
                .iter()
                .map(|p| p.iter().map(|&e| prob[e]).sum::<f64>() / p.len() as f64)
                .collect();
            means.iter().sum::<f64>() / means.len() as f64
        })
        .collect()
}

// -------------------------------------------------------------- retrieval

/// Undirected-by-construction adjacency of a graph as plain sets.
fn neighbours(graph: &KnowledgeGraph, c: ConceptId) -> BTreeSet<ConceptId> {
    graph.triples().iter().filter(|t| t.head == c).map(|t| t.tail).collect()
}

/// Retrieval reference written from the rule alone: per round, candidates
/// are outside nodes adjacent to the frontier-inclusive member set, ranked by
/// the number of distinct members adjacent to them.
pub fn retrieve_reference(
    graph: &KnowledgeGraph,
    sources: &[ConceptId],
    hop_bound: u32,
    budget: Option<usize>,
) -> BTreeSet<ConceptId> {
    let mut members: BTreeSet<ConceptId> = sources.iter().copied().collect();
    for _ in 0..hop_bound {
        let mut score: BTreeMap<ConceptId, usize> = BTreeMap::new();
        for &m in &members {
            for c in neighbours(graph, m) {
                if !members.contains(&c) {
                    *score.entry(c).or_default() += 1;
                }
            }
        }
        let mut ranked: Vec<(ConceptId, usize)> = score.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        if let Some(b) = budget {
            ranked.truncate(b);
        }
        if ranked.is_empty() {
            break;
        }
        members.extend(ranked.into_iter().map(|(c, _)| c));
    }
    members
}

/// Distances by repeated relaxation (Bellman-Ford with unit weights).
pub fn distances_by_relaxation(edges: &[Triple], nodes: &[ConceptId], sources: &[ConceptId]) -> BTreeMap<ConceptId, u32> {
    let mut d: BTreeMap<ConceptId, u32> = nodes.iter().map(|&c| (c, u32::MAX)).collect();
    for s in sources {
        d.insert(*s, 0);
    }
    loop {
        let mut changed = false;
        for t in edges {
            let (dh, dt) = (d[&t.head], d[&t.tail]);
            if dh != u32::MAX && dh + 1 < dt {
                d.insert(t.tail, dh + 1);
                changed = true;
            }
        }
        if !changed {
            return d;
        }
    }
}

/// Triples on some shortest source→bridge path, per source, by enumerating
/// all simple paths of the shortest length.
pub fn supervision_reference(
    edges: &[Triple],
    nodes: &[ConceptId],
    sources: &[ConceptId],
    bridge: &[ConceptId],
) -> BTreeSet<Triple> {
    let mut out = BTreeSet::new();
    for &s in sources {
        let d = distances_by_relaxation(edges, nodes, &[s]);
        for &b in bridge {
            let target = d[&b];
            if target == 0 || target == u32::MAX {
                continue;
            }
            let mut stack: Vec<(ConceptId, Vec<Triple>)> = vec![(s, Vec::new())];
            while let Some((v, path)) = stack.pop() {
                if path.len() as u32 == target {
                    if v == b {
                        out.extend(path.iter().copied());
                    }
                    continue;
                }
                for t in edges.iter().filter(|t| t.head == v) {
                    let mut p = path.clone();
                    p.push(*t);
                    stack.push((t.tail, p));
                }
            }
        }
    }
    out
}

// ------------------------------------------------------------- gradients

pub struct ToyInstance {
    pub example: EncodedExample,
    pub params: ModelParams,
    pub active: Vec<usize>,
}

/// A random example small enough for exhaustive finite differences.
///
/// Parallel triples, unreachable nodes and distances above `max_dist` all
/// occur with non-trivial probability.
pub fn toy_instance(seed: u64) -> ToyInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(4..9u32);
    let vocab = 12;
    let cfg = ModelConfig {
        dim: 4,
        blocks: rng.random_range(0..3),
        vocab_size: vocab,
        max_len: 6,
        max_dist: 2,
    };
    let mut edges = random_triples(&mut rng, n, (2 * n) as usize, 34);
    // a parallel triple with a different relation
    if let Some(&t) = edges.first() {
        edges.push(Triple::new(t.head, RelationId((t.rel.0 + 1) % 34), t.tail));
    }
    let sources = vec![ConceptId(0)];
    let sub = subgraph_of(n, edges, sources);
    let statement: Vec<u32> = (0..rng.random_range(1..=6)).map(|_| rng.random_range(0..vocab as u32)).collect();
    let concept_tokens: Vec<Vec<u32>> = (0..n)
        .map(|_| (0..rng.random_range(1..=3)).map(|_| rng.random_range(0..vocab as u32)).collect())
        .collect();
    let positive: Vec<bool> = (0..sub.edges().len()).map(|_| rng.random_bool(0.3)).collect();
    let is_bridge: Vec<bool> = (0..n as usize).map(|v| !sub.is_source(v) && rng.random_bool(0.4)).collect();
    let mut params = ModelParams::init(cfg, &mut rng);
    // non-zero biases so their gradients are exercised from a generic point
    for (name, t) in params.tensors_mut() {
        if name.ends_with("_bias") {
            t.mapv_inplace(|_| rng.random_range(-0.3..0.3));
        }
    }
    let example = EncodedExample {
        id: format!("toy-{seed}"),
        statement,
        concept_tokens,
        subgraph: sub,
        positive,
        is_bridge,
    };
    let k1 = rng.random_range(1..=n as usize);
    let active = forward(&example, &params, k1, None).expect("forward").active;
    ToyInstance { example, params, active }
}

/// Loss at `params` with the active set held fixed.
pub fn toy_loss(inst: &ToyInstance, params: &ModelParams, l1: f64, l2: f64) -> f64 {
    forward(&inst.example, params, 0, Some(&inst.active))
        .expect("forward")
        .losses(&inst.example, l1, l2, None)
        .total
}

pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
}

/// Central differences on `coords` (tensor index, flat offset) against the
/// analytic gradient.
pub fn grad_check(inst: &ToyInstance, l1: f64, l2: f64, coords: &[(usize, usize)], eps: f64) -> GradCheck {
    let f = forward(&inst.example, &inst.params, 0, Some(&inst.active)).expect("forward");
    let (grads, _) = f.backward(&inst.example, &inst.params, l1, l2, None).expect("backward");
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|(_, t)| t.iter().copied().collect()).collect();
    let mut worst: f64 = 0.0;
    for &(ti, off) in coords {
        let mut plus = inst.params.clone();
        let mut minus = inst.params.clone();
        {
            let mut tp = plus.tensors_mut();
            let slot = tp[ti].1.as_slice_mut().expect("contiguous");
            slot[off] += eps;
        }
        {
            let mut tm = minus.tensors_mut();
            let slot = tm[ti].1.as_slice_mut().expect("contiguous");
            slot[off] -= eps;
        }
        let numeric = (toy_loss(inst, &plus, l1, l2) - toy_loss(inst, &minus, l1, l2)) / (2.0 * eps);
        let a = analytic[ti][off];
        let scale = a.abs().max(numeric.abs());
        let err = if scale < 1e-7 { (a - numeric).abs() } else { (a - numeric).abs() / scale };
        worst = worst.max(err);
    }
    GradCheck { max_rel_err: worst, checked: coords.len() }
}

/// `count` coordinates: three quarters drawn where the analytic gradient is
/// non-zero, the rest uniformly.
pub fn sample_coords(inst: &ToyInstance, l1: f64, l2: f64, count: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let f = forward(&inst.example, &inst.params, 0, Some(&inst.active)).expect("forward");
    let (grads, _) = f.backward(&inst.example, &inst.params, l1, l2, None).expect("backward");
    let mut all = Vec::new();
    let mut live = Vec::new();
    for (ti, (_, t)) in grads.tensors().iter().enumerate() {
        for (off, &g) in t.iter().enumerate() {
            all.push((ti, off));
            if g != 0.0 {
                live.push((ti, off));
            }
        }
    }
    let mut out = Vec::with_capacity(count);
    let live_n = if live.is_empty() { 0 } else { count * 3 / 4 };
    for _ in 0..live_n {
        out.push(live[rng.random_range(0..live.len())]);
    }
    while out.len() < count {
        out.push(all[rng.random_range(0..all.len())]);
    }
    out
}

/// Every coordinate of every tensor.
pub fn all_coords(params: &ModelParams) -> Vec<(usize, usize)> {
    params
        .tensors()
        .iter()
        .enumerate()
        .flat_map(|(ti, (_, t))| (0..t.len()).map(move |off| (ti, off)))
        .collect()
}

pub fn node_set(sub: &Subgraph) -> HashSet<ConceptId> {
    sub.nodes().iter().copied().collect()
}
