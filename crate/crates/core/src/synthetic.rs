//! Planted-pattern corpus: a random graph where the gold bridge concepts of a
//! statement are exactly the source's neighbours along two designated
//! relations, and the statement carries words tied to those relations.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kg::{ConceptId, GraphBuilder, KnowledgeGraph, RelationId, RelationVocab};
use crate::subgraph::DatasetRecord;

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub nodes: usize,
    pub train: usize,
    pub test: usize,
    /// Random relations between plain nodes, per plain node.
    pub noise_degree: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            nodes: 300,
            train: 200,
            test: 50,
            noise_degree: 2,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub graph: KnowledgeGraph,
    pub train: Vec<DatasetRecord>,
    pub test: Vec<DatasetRecord>,
}

const NOISE_RELATIONS: [&str; 4] = ["relatedto", "isa", "hasproperty", "capableof"];

/// `nodes` splits into one twelfth "place", one twelfth "tool" and the rest
/// "thing" concepts. Every thing points to one or two places by `atlocation`
/// and to one tool by `usedfor`; things are also linked among themselves by
/// other relations. A statement asks where a thing is kept and what it is used
/// with, so its gold bridge concepts are exactly the thing's neighbours along
/// the two designated relations. Statement sources are distinct things.
pub fn planted_corpus(cfg: &SyntheticConfig) -> SyntheticCorpus {
    let vocab = RelationVocab::conceptnet();
    let rel = |name: &str| vocab.id_by_name(name).expect("known relation");
    let (at, used) = (rel("atlocation"), rel("usedfor"));
    let noise: Vec<RelationId> = NOISE_RELATIONS.iter().map(|n| rel(n)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let kinds = (cfg.nodes / 12).max(1);
    let surface = |i: usize| {
        let kind = if i < kinds {
            "place"
        } else if i < 2 * kinds {
            "tool"
        } else {
            "thing"
        };
        format!("{kind} k{i}")
    };
    let mut b = GraphBuilder::new(&vocab);
    let ids: Vec<ConceptId> = (0..cfg.nodes).map(|i| b.concept(&surface(i))).collect();
    let places: Vec<usize> = (0..kinds).collect();
    let tools: Vec<usize> = (kinds..2 * kinds).collect();
    let things: Vec<usize> = (2 * kinds..cfg.nodes).collect();

    let mut linked: HashSet<(usize, usize)> = HashSet::new();
    let mut link = |b: &mut GraphBuilder, h: usize, r: RelationId, t: usize| {
        h != t && linked.insert((h.min(t), h.max(t))) && b.add_triple(ids[h], r, ids[t])
    };
    let mut gold = vec![Vec::new(); cfg.nodes];
    for &t in &things {
        for _ in 0..rng.random_range(1..=2) {
            let p = *places.choose(&mut rng).expect("places");
            if link(&mut b, t, at, p) {
                gold[t].push(p);
            }
        }
        let u = *tools.choose(&mut rng).expect("tools");
        if link(&mut b, t, used, u) {
            gold[t].push(u);
        }
    }
    for &t in &things {
        for _ in 0..cfg.noise_degree {
            let o = *things.choose(&mut rng).expect("things");
            let r = *noise.choose(&mut rng).expect("relations");
            link(&mut b, t, r, o);
        }
    }
    let graph = b.build();

    let mut sources = things.clone();
    sources.shuffle(&mut rng);
    let records: Vec<DatasetRecord> = sources
        .into_iter()
        .take(cfg.train + cfg.test)
        .enumerate()
        .map(|(i, t)| {
            let src = surface(t);
            let places: Vec<String> = gold[t].iter().filter(|&&g| g < kinds).map(|&g| format!("the {}", surface(g))).collect();
            let tools: Vec<String> = gold[t].iter().filter(|&&g| g >= kinds).map(|&g| format!("the {}", surface(g))).collect();
            DatasetRecord {
                id: format!("syn-{i:03}"),
                statement: format!("where is the {src} kept and what is it used with"),
                explanations: vec![format!(
                    "the {src} is kept at {} and used with {}",
                    places.join(" and "),
                    tools.join(" and ")
                )],
            }
        })
        .collect();
    let test = records[cfg.train.min(records.len())..].to_vec();
    let mut train = records;
    train.truncate(cfg.train);
    SyntheticCorpus { graph, train, test }
}
