mod support;

use bridgekg::extractor::forward;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::{all_coords, grad_check, sample_coords, toy_instance, toy_loss};

const EPS: f64 = 1e-4;
const TOL: f64 = 1e-4;
const LOSSES: [(&str, f64, f64); 3] = [("triple", 1.0, 0.0), ("concept", 0.0, 1.0), ("combined", 1.0, 1.0)];

#[test]
fn every_coordinate_matches_finite_differences() {
    for seed in 0..4 {
        let inst = toy_instance(seed);
        let coords = all_coords(&inst.params);
        for (name, l1, l2) in LOSSES {
            let r = grad_check(&inst, l1, l2, &coords, EPS);
            assert!(r.max_rel_err < TOL, "seed {seed} {name}: {}", r.max_rel_err);
        }
    }
}

#[test]
fn sampled_coordinates_over_many_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for seed in 100..140 {
        let inst = toy_instance(seed);
        for (name, l1, l2) in LOSSES {
            let coords = sample_coords(&inst, l1, l2, 20, &mut rng);
            let r = grad_check(&inst, l1, l2, &coords, EPS);
            assert!(r.max_rel_err < TOL, "seed {seed} {name}: {}", r.max_rel_err);
        }
    }
}

#[test]
fn combined_gradient_is_weighted_sum() {
    for seed in 200..210 {
        let inst = toy_instance(seed);
        let f = forward(&inst.example, &inst.params, 0, Some(&inst.active)).unwrap();
        let (gt, _) = f.backward(&inst.example, &inst.params, 1.0, 0.0, None).unwrap();
        let (gc, _) = f.backward(&inst.example, &inst.params, 0.0, 1.0, None).unwrap();
        let (gb, _) = f.backward(&inst.example, &inst.params, 0.7, 2.5, None).unwrap();
        let mut expect = gt.zeros_like();
        expect.add_scaled(&gt, 0.7);
        expect.add_scaled(&gc, 2.5);
        for ((name, a), (_, b)) in gb.tensors().into_iter().zip(expect.tensors()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()), "{name}: {x} vs {y}");
            }
        }
    }
}

#[test]
fn doubling_the_weights_doubles_gradients() {
    let inst = toy_instance(7);
    let f = forward(&inst.example, &inst.params, 0, Some(&inst.active)).unwrap();
    let (g1, l1) = f.backward(&inst.example, &inst.params, 1.0, 1.0, None).unwrap();
    let (g2, l2) = f.backward(&inst.example, &inst.params, 2.0, 2.0, None).unwrap();
    assert_eq!(l2.total, 2.0 * l1.total);
    for ((_, a), (_, b)) in g1.tensors().into_iter().zip(g2.tensors()) {
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(2.0 * x, *y);
        }
    }
}

#[test]
fn untouched_parameters_have_zero_gradient() {
    let inst = toy_instance(3);
    let f = forward(&inst.example, &inst.params, 0, Some(&inst.active)).unwrap();
    let (g, _) = f.backward(&inst.example, &inst.params, 1.0, 1.0, None).unwrap();
    let used: std::collections::HashSet<u32> = inst
        .example
        .statement
        .iter()
        .chain(inst.example.concept_tokens.iter().flatten())
        .copied()
        .collect();
    for tok in 0..inst.params.config.vocab_size as u32 {
        if !used.contains(&tok) {
            assert!(g.token_embedding.row(tok as usize).iter().all(|&x| x == 0.0));
        }
    }
    let len = inst.example.statement.len();
    for p in len..inst.params.config.max_len {
        assert!(g.position_embedding.row(p).iter().all(|&x| x == 0.0));
    }
    // λ = 0 on both losses touches nothing
    let (z, l) = f.backward(&inst.example, &inst.params, 0.0, 0.0, None).unwrap();
    assert_eq!(l.total, 0.0);
    assert!(z.tensors().iter().all(|(_, t)| t.iter().all(|&x| x == 0.0)));
    assert!(toy_loss(&inst, &inst.params, 1.0, 1.0).is_finite());
}
