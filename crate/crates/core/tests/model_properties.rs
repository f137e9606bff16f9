mod support;

use std::collections::BTreeSet;

use bridgekg::encoder::{
    encode_concept, encode_concept_traced, encode_statement, ConceptRepr, ModelConfig, ModelParams, StatementEncoding,
};
use bridgekg::eval::{cutoff_metrics, f1_from_sets, pr_at_n};
use bridgekg::extractor::{
    concept_logits, forward, rank_by_logit, route_paths, score_triples, select_concepts, sigmoid, train, TrainConfig,
};
use bridgekg::kg::{ConceptId, RelationId, Triple};
use ndarray::{arr1, arr2, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{random_triples, routing_by_enumeration, subgraph_of, toy_instance};

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(256)
}

fn random_dag(seed: u64) -> (bridgekg::subgraph::Subgraph, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=30u32);
    let m = rng.random_range(0..=2 * n as usize);
    let edges = random_triples(&mut rng, n, m, 34);
    let k = rng.random_range(1..=3.min(n));
    let sources: BTreeSet<ConceptId> = (0..k).map(|_| ConceptId(rng.random_range(0..n))).collect();
    let sub = subgraph_of(n, edges, sources.into_iter().collect());
    let prob = (0..sub.edges().len()).map(|_| rng.random_range(0.0..1.0)).collect();
    (sub, prob)
}

fn random_params(rng: &mut ChaCha8Rng, blocks: usize) -> ModelParams {
    let cfg = ModelConfig {
        dim: rng.random_range(1..6),
        blocks,
        vocab_size: 10,
        max_len: 8,
        max_dist: 3,
    };
    ModelParams::init(cfg, rng)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn routing_equals_path_enumeration(seed in any::<u64>()) {
        let (sub, prob) = random_dag(seed);
        let fast = route_paths(&sub, &prob);
        let slow = routing_by_enumeration(&sub, &prob);
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() <= 1e-12, "{} vs {}", a, b);
        }
    }

    #[test]
    fn routing_stays_in_unit_interval(seed in any::<u64>()) {
        let (sub, prob) = random_dag(seed);
        for s in route_paths(&sub, &prob) {
            prop_assert!((0.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn raising_one_triple_never_lowers_routing(seed in any::<u64>(), pick in any::<prop::sample::Index>(), bump in 0.0f64..1.0) {
        let (sub, prob) = random_dag(seed);
        prop_assume!(!prob.is_empty());
        let e = pick.index(prob.len());
        let mut raised = prob.clone();
        raised[e] += (1.0 - raised[e]) * bump;
        let before = route_paths(&sub, &prob);
        let after = route_paths(&sub, &raised);
        for (a, b) in before.iter().zip(&after) {
            prop_assert!(b >= &(a - 1e-15));
        }
    }

    #[test]
    fn selection_order_survives_positive_scaling(seed in any::<u64>(), alpha in 1e-3f64..1e3) {
        let inst = toy_instance(seed);
        let f = forward(&inst.example, &inst.params, 0, Some(&inst.active)).unwrap();
        let ids: Vec<ConceptId> = inst.active.iter().map(|&v| inst.example.subgraph.nodes()[v]).collect();
        let order = |params: &ModelParams| -> Vec<ConceptId> {
            let z = concept_logits(inst.active.iter().map(|&v| &f.concepts[v]), &f.statement, params);
            let cands: Vec<(ConceptId, f64)> = ids.iter().copied().zip(z).collect();
            rank_by_logit(&cands, cands.len()).into_iter().map(|(c, _)| c).collect()
        };
        let mut scaled = inst.params.clone();
        scaled.concept_bilinear *= alpha;
        prop_assert_eq!(order(&inst.params), order(&scaled));
    }

    #[test]
    fn attended_rows_lie_in_the_statement_envelope(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks = rng.random_range(0..3);
        let params = random_params(&mut rng, blocks);
        let stmt: Vec<u32> = (0..rng.random_range(1..=8)).map(|_| rng.random_range(0..10)).collect();
        let concept: Vec<u32> = (0..rng.random_range(1..=4)).map(|_| rng.random_range(0..10)).collect();
        let enc = encode_statement(&stmt, &params).unwrap();
        let (_, trace) = encode_concept_traced(&concept, Some(1), &enc, &params).unwrap();
        let attn = trace.attention();
        let context = attn.dot(&enc.hidden);
        for row in attn.rows() {
            prop_assert!(row.iter().all(|&a| a >= 0.0));
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        for j in 0..params.config.dim {
            let col = enc.hidden.column(j);
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for k in 0..concept.len() {
                let v = context[[k, j]];
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn distant_concepts_share_the_far_row(seed in any::<u64>(), a in 0u32..20, b in 0u32..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = random_params(&mut rng, 1);
        let enc = encode_statement(&[1, 2, 3], &params).unwrap();
        let md = params.config.max_dist;
        let ra = encode_concept(&[4], Some(a), &enc, &params).unwrap();
        let rb = encode_concept(&[4], Some(b), &enc, &params).unwrap();
        prop_assert_eq!(ra.distance_part() == rb.distance_part(), a.min(md) == b.min(md));
        let far = encode_concept(&[4], None, &enc, &params).unwrap();
        prop_assert_eq!(far.distance_part(), params.distance_embedding.row(md as usize + 1));
    }

    #[test]
    fn recall_at_n_never_decreases(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let examples = rng.random_range(1..8);
        let mut rankings = Vec::new();
        let mut gold = Vec::new();
        for _ in 0..examples {
            let mut pool: Vec<ConceptId> = (0..12).map(ConceptId).collect();
            use rand::seq::SliceRandom;
            pool.shuffle(&mut rng);
            rankings.push(pool[..rng.random_range(0..12)].to_vec());
            gold.push((0..rng.random_range(0..5)).map(|_| ConceptId(rng.random_range(0..12))).collect::<Vec<_>>());
        }
        let curve = pr_at_n(&rankings, &gold, 12);
        for w in curve.recall.windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
        for (r, g) in rankings.iter().zip(&gold) {
            let g: BTreeSet<ConceptId> = g.iter().copied().collect();
            if g.is_empty() {
                continue;
            }
            let rec: Vec<f64> = (1..=12).map(|n| cutoff_metrics(r, &g, n).1).collect();
            for w in rec.windows(2) {
                prop_assert!(w[1] >= w[0]);
            }
        }
    }

    #[test]
    fn f1_is_symmetric_and_bounded(a in prop::collection::btree_set(0u32..10, 0..6), b in prop::collection::btree_set(0u32..10, 0..6)) {
        let a: BTreeSet<ConceptId> = a.into_iter().map(ConceptId).collect();
        let b: BTreeSet<ConceptId> = b.into_iter().map(ConceptId).collect();
        let ab = f1_from_sets(&a, &b).map(|e| e.f1);
        let ba = f1_from_sets(&b, &a).map(|e| e.f1);
        if let (Some(x), Some(y)) = (ab, ba) {
            prop_assert!((x - y).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(&x));
        }
    }
}

#[test]
fn single_incoming_edge_from_a_source_routes_its_probability() {
    let t = |h, t| Triple::new(ConceptId(h), RelationId(0), ConceptId(t));
    let sub = subgraph_of(3, vec![t(0, 1), t(1, 2)], vec![ConceptId(0)]);
    let r = route_paths(&sub, &[0.37, 0.9]);
    assert_eq!(r[0], 0.0);
    assert_eq!(r[1], 0.37);
}

fn hand_statement() -> StatementEncoding {
    let hidden = arr2(&[[0.5, -1.0], [0.25, 2.0]]);
    StatementEncoding { pooled: arr1(&[0.5, 2.0]), argmax: vec![0, 1], hidden }
}

fn hand_params() -> ModelParams {
    let cfg = ModelConfig { dim: 2, blocks: 0, vocab_size: 3, max_len: 4, max_dist: 2 };
    let mut p = ModelParams::zeros(cfg);
    p.relation_embedding = Array2::from_shape_fn((34, 2), |(r, j)| if j == 0 { r as f64 * 0.1 } else { -0.2 });
    p.triple_bilinear = Array2::from_shape_fn((10, 2), |(i, j)| (i as f64 - 4.0) * 0.05 + j as f64 * 0.1);
    p.concept_bilinear = Array2::from_shape_fn((4, 2), |(i, j)| [0.3, -0.2, 0.7, 0.1][i] * if j == 0 { 1.0 } else { -0.5 });
    p
}

#[test]
fn two_triple_probabilities_by_hand() {
    let params = hand_params();
    let x = hand_statement();
    let reprs = [
        ConceptRepr { vector: arr1(&[1.0, 0.0, 0.5, -0.5]) },
        ConceptRepr { vector: arr1(&[0.0, 2.0, -1.0, 1.0]) },
        ConceptRepr { vector: arr1(&[0.3, 0.3, 0.3, 0.3]) },
    ];
    let edges = vec![
        Triple::new(ConceptId(0), RelationId(3), ConceptId(1)),
        Triple::new(ConceptId(1), RelationId(20), ConceptId(2)),
    ];
    let sub = subgraph_of(3, edges.clone(), vec![ConceptId(0)]);
    let got = score_triples(&sub, &reprs, &x, &params);
    for (k, t) in edges.iter().enumerate() {
        let mut he: Vec<f64> = Vec::new();
        he.extend(reprs[t.head.index()].vector.iter().copied());
        he.extend(params.relation_embedding.row(t.rel.index()).iter().copied());
        he.extend(reprs[t.tail.index()].vector.iter().copied());
        let mut z = 0.0f64;
        for (i, hi) in he.iter().enumerate() {
            for j in 0..2 {
                z += hi * params.triple_bilinear[[i, j]] * x.pooled[j];
            }
        }
        let p = 1.0 / (1.0 + (-z).exp());
        assert!((got[k] - p).abs() < 1e-15, "edge {k}: {} vs {p}", got[k]);
    }
}

#[test]
fn four_concept_ranking_by_hand() {
    let params = hand_params();
    let x = hand_statement();
    let vecs = [[1.0, 0.0, 0.0, 1.0], [0.0, 1.0, 1.0, 0.0], [-1.0, 0.5, 0.2, 0.0], [0.4, 0.4, 0.4, 0.4]];
    let reprs: Vec<ConceptRepr> = vecs.iter().map(|v| ConceptRepr { vector: arr1(v) }).collect();
    let ids = [ConceptId(7), ConceptId(3), ConceptId(9), ConceptId(1)];
    let active: Vec<(ConceptId, &ConceptRepr)> = ids.iter().copied().zip(reprs.iter()).collect();
    let sel = select_concepts(&active, &x, &params, 4);
    let mut expect: Vec<(ConceptId, f64)> = vecs
        .iter()
        .zip(ids)
        .map(|(v, id)| {
            let mut z = 0.0f64;
            for i in 0..4 {
                for j in 0..2 {
                    z += v[i] * params.concept_bilinear[[i, j]] * x.pooled[j];
                }
            }
            (id, 1.0 / (1.0 + (-z).exp()))
        })
        .collect();
    expect.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    assert_eq!(sel.ranked.len(), 4);
    for ((c, p), (ec, ep)) in sel.ranked.iter().zip(&expect) {
        assert_eq!(c, ec);
        assert!((p - ep).abs() < 1e-15);
    }
}

#[test]
fn zero_bilinears_give_even_odds() {
    let mut params = hand_params();
    params.triple_bilinear.fill(0.0);
    params.concept_bilinear.fill(0.0);
    let x = hand_statement();
    let reprs = vec![ConceptRepr { vector: arr1(&[1.0, 2.0, 3.0, 4.0]) }; 4];
    let t = |h, r, tl| Triple::new(ConceptId(h), RelationId(r), ConceptId(tl));
    let sub = subgraph_of(4, vec![t(0, 1, 1), t(1, 2, 2), t(2, 3, 3)], vec![ConceptId(0)]);
    assert!(score_triples(&sub, &reprs, &x, &params).iter().all(|&p| p == 0.5));
    let ids = [ConceptId(5), ConceptId(2), ConceptId(8), ConceptId(4)];
    let active: Vec<(ConceptId, &ConceptRepr)> = ids.iter().copied().zip(reprs.iter()).collect();
    let sel = select_concepts(&active, &x, &params, 3);
    assert_eq!(sel.ranked, vec![(ConceptId(2), 0.5), (ConceptId(4), 0.5), (ConceptId(5), 0.5)]);
    assert_eq!(sigmoid(0.0), 0.5);
}

#[test]
fn zero_learning_rate_leaves_parameters_untouched() {
    let inst = toy_instance(11);
    let cfg = TrainConfig { learning_rate: 0.0, k1: 4, k2: 2, epochs: 2, batch_size: 2, ..TrainConfig::default() };
    let (out, _) = train(inst.params.clone(), std::slice::from_ref(&inst.example), &[], &cfg).unwrap();
    assert_eq!(out, inst.params);
}

#[test]
fn one_step_lowers_the_loss_of_its_example() {
    for seed in 0..5 {
        let inst = toy_instance(seed);
        let cfg = TrainConfig { k1: 30, k2: 3, epochs: 1, batch_size: 1, warmup: 0.0, ..TrainConfig::default() };
        let loss = |p: &ModelParams| forward(&inst.example, p, cfg.k1, None).unwrap().losses(&inst.example, 1.0, 1.0, None).total;
        let (after, _) = train(inst.params.clone(), std::slice::from_ref(&inst.example), &[], &cfg).unwrap();
        assert!(loss(&after) < loss(&inst.params), "seed {seed}: {} -> {}", loss(&inst.params), loss(&after));
    }
}
