use rand::seq::{index::sample, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::model::{forward, ExampleLosses};
use super::selection::{rank_by_logit, DEFAULT_K1, DEFAULT_K2};
use super::{EncodedExample, ExtractorError};
use crate::encoder::{EncoderError, Gradients, ModelParams};
use crate::kg::ConceptId;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lambda_triple: f64,
    pub lambda_concept: f64,
    pub k1: usize,
    pub k2: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Fraction of all steps spent in linear warmup.
    pub warmup: f64,
    pub seed: u64,
    /// Samples at most this many negative triples per example and step.
    pub negative_cap: Option<usize>,
    /// Threads computing per-example gradients; results do not depend on it.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_triple: 1.0,
            lambda_concept: 1.0,
            k1: DEFAULT_K1,
            k2: DEFAULT_K2,
            learning_rate: 1e-3,
            epochs: 3,
            batch_size: 4,
            warmup: 0.1,
            seed: 42,
            negative_cap: None,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ExtractorError> {
        let bad = |m: &str| Err(ExtractorError::InvalidConfig(m.to_string()));
        if !(self.lambda_triple >= 0.0 && self.lambda_concept >= 0.0) {
            return bad("loss weights must be non-negative");
        }
        if self.k1 == 0 || self.k2 == 0 || self.k2 > self.k1 {
            return bad("need 0 < k2 <= k1");
        }
        if self.epochs == 0 || self.batch_size == 0 || self.workers == 0 {
            return bad("epochs, batch size and workers must be positive");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.warmup) {
            return bad("warmup fraction must lie in [0, 1]");
        }
        if self.negative_cap == Some(0) {
            return bad("negative cap must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub mean_triple_loss: f64,
    pub mean_concept_loss: f64,
    pub mean_total_loss: f64,
    /// Bridge concepts inside the active set, summed over examples.
    pub bridge_covered: usize,
    pub bridge_total: usize,
    pub empty_triple_examples: usize,
    /// Mean Recall@K2 on the development set, if it has bridge concepts.
    pub dev_recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub total_steps: usize,
    pub warmup_steps: usize,
    pub epochs: Vec<EpochReport>,
}

struct Adam {
    m: Gradients,
    v: Gradients,
    t: i32,
}

impl Adam {
    fn new(params: &ModelParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut ModelParams, grads: &Gradients, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
            .zip(grads.tensors());
        for ((((_, p), (_, m)), (_, v)), (_, g)) in tensors {
            ndarray::Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, &g| {
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
            });
        }
    }
}

fn negative_mask(ex: &EncodedExample, cap: Option<usize>, rng: &mut ChaCha8Rng) -> Option<Vec<bool>> {
    let cap = cap?;
    let negatives: Vec<usize> = (0..ex.positive.len()).filter(|&e| !ex.positive[e]).collect();
    if negatives.len() <= cap {
        return None;
    }
    let mut mask = ex.positive.clone();
    for i in sample(rng, negatives.len(), cap).into_iter() {
        mask[negatives[i]] = true;
    }
    Some(mask)
}

/// Trains all parameters with Adam under linear warmup then a constant rate.
///
/// Per-example gradients are computed in parallel and summed in batch order,
/// so the result depends only on the inputs and the seed.
pub fn train(
    init: ModelParams,
    train_set: &[EncodedExample],
    dev_set: &[EncodedExample],
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainReport), ExtractorError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(ExtractorError::EmptyTrainingSet);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| ExtractorError::InvalidConfig(e.to_string()))?;
    let steps_per_epoch = train_set.len().div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;
    let warmup_steps = (cfg.warmup * total_steps as f64).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = init;
    let mut adam = Adam::new(&params);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut report = TrainReport {
        total_steps,
        warmup_steps,
        epochs: Vec::with_capacity(cfg.epochs),
    };
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = ExampleLosses::default();
        let mut empty_triples = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let masks: Vec<Option<Vec<bool>>> = batch
                .iter()
                .map(|&i| negative_mask(&train_set[i], cfg.negative_cap, &mut rng))
                .collect();
            let results: Vec<Result<(Gradients, ExampleLosses), ExtractorError>> = pool.install(|| {
                batch
                    .par_iter()
                    .zip(masks.par_iter())
                    .map(|(&i, mask)| {
                        let ex = &train_set[i];
                        let f = forward(ex, &params, cfg.k1, None)?;
                        f.backward(ex, &params, cfg.lambda_triple, cfg.lambda_concept, mask.as_deref())
                    })
                    .collect()
            });
            let fail = |what: String, params: &ModelParams| ExtractorError::NonFinite {
                epoch,
                step,
                what,
                last_good: Box::new(params.clone()),
            };
            let mut grads = params.zeros_like();
            for r in results {
                let (g, l) = match r {
                    Ok(x) => x,
                    Err(ExtractorError::Encoder(EncoderError::NumericalInstability(what))) => {
                        return Err(fail(what, &params));
                    }
                    Err(e) => return Err(e),
                };
                if !l.total.is_finite() {
                    return Err(fail("loss".into(), &params));
                }
                grads.add_scaled(&g, 1.0);
                sums.triple += l.triple;
                sums.concept += l.concept;
                sums.total += l.total;
                sums.covered += l.covered;
                sums.bridge_total += l.bridge_total;
                empty_triples += usize::from(l.triple_empty);
            }
            grads.scale(1.0 / batch.len() as f64);
            let lr = if step < warmup_steps {
                cfg.learning_rate * (step + 1) as f64 / warmup_steps as f64
            } else {
                cfg.learning_rate
            };
            let before = params.clone();
            adam.step(&mut params, &grads, lr);
            if let Some(name) = params.first_non_finite() {
                return Err(fail(name, &before));
            }
            step += 1;
        }
        let n = train_set.len() as f64;
        let dev_recall = pool.install(|| evaluate_recall(&params, dev_set, cfg.k1, cfg.k2))?;
        let e = EpochReport {
            epoch: epoch + 1,
            mean_triple_loss: sums.triple / n,
            mean_concept_loss: sums.concept / n,
            mean_total_loss: sums.total / n,
            bridge_covered: sums.covered,
            bridge_total: sums.bridge_total,
            empty_triple_examples: empty_triples,
            dev_recall,
        };
        log::info!(
            "epoch {}: loss {:.4} (triple {:.4}, concept {:.4}), coverage {}/{}, dev recall {:?}",
            e.epoch,
            e.mean_total_loss,
            e.mean_triple_loss,
            e.mean_concept_loss,
            e.bridge_covered,
            e.bridge_total,
            e.dev_recall
        );
        report.epochs.push(e);
    }
    Ok((params, report))
}

/// Mean Recall@`k2` over examples that have bridge concepts.
pub fn evaluate_recall(
    params: &ModelParams,
    examples: &[EncodedExample],
    k1: usize,
    k2: usize,
) -> Result<Option<f64>, ExtractorError> {
    let recalls: Vec<Option<f64>> = examples
            .par_iter()
            .map(|ex| {
                let bridge = ex.bridge();
                if bridge.is_empty() {
                    return Ok(None);
                }
                let f = forward(ex, params, k1, None)?;
                let nodes = ex.subgraph.nodes();
                let cands: Vec<(ConceptId, f64)> =
                    f.active.iter().map(|&v| nodes[v]).zip(f.concept_logits.iter().copied()).collect();
                let hits = rank_by_logit(&cands, k2)
                    .iter()
                    .filter(|(c, _)| bridge.binary_search(c).is_ok())
                    .count();
                Ok(Some(hits as f64 / bridge.len() as f64))
            })
        .collect::<Result<Vec<_>, ExtractorError>>()?;
    let scored: Vec<f64> = recalls.into_iter().flatten().collect();
    if scored.is_empty() {
        return Ok(None);
    }
    Ok(Some(scored.iter().sum::<f64>() / scored.len() as f64))
}
