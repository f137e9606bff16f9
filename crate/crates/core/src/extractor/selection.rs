use std::cmp::Ordering;

use ndarray::Array1;

use super::loss::sigmoid;
use crate::encoder::{ConceptRepr, ModelParams, StatementEncoding};
use crate::kg::ConceptId;
use crate::subgraph::Subgraph;

pub const DEFAULT_K1: usize = 30;
pub const DEFAULT_K2: usize = 3;

/// Top-`k1` non-source nodes by routing score (descending, ties to the lower
/// concept id), as local indices in rank order.
pub fn deactivate(sub: &Subgraph, routing: &[f64], k1: usize) -> Vec<usize> {
    assert_eq!(routing.len(), sub.len());
    let mut cands: Vec<usize> = (0..sub.len()).filter(|&v| !sub.is_source(v)).collect();
    // local order is ascending concept id
    cands.sort_by(|&a, &b| match routing[b].total_cmp(&routing[a]) {
        Ordering::Equal => a.cmp(&b),
        o => o,
    });
    cands.truncate(k1);
    cands
}

/// `h_c · W_3 h_x` per concept.
pub fn concept_logits<'a>(
    concepts: impl IntoIterator<Item = &'a ConceptRepr>,
    statement: &StatementEncoding,
    params: &ModelParams,
) -> Vec<f64> {
    let v: Array1<f64> = params.concept_bilinear.dot(&statement.pooled);
    concepts.into_iter().map(|c| c.vector.dot(&v)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// `(concept, P(c|x))`, best first.
    pub ranked: Vec<(ConceptId, f64)>,
    /// Set when there were no candidates.
    pub empty: bool,
}

/// Ranks candidates by logit (descending, ties to the lower id) and keeps `k2`.
pub fn rank_by_logit(candidates: &[(ConceptId, f64)], k2: usize) -> Vec<(ConceptId, f64)> {
    let mut order: Vec<(ConceptId, f64)> = candidates.to_vec();
    order.sort_by(|a, b| match b.1.total_cmp(&a.1) {
        Ordering::Equal => a.0.cmp(&b.0),
        o => o,
    });
    order.truncate(k2);
    order.into_iter().map(|(c, z)| (c, sigmoid(z))).collect()
}

/// `P(c|x) = σ(h_c W_3 h_x)` over the active concepts, top `k2` returned.
pub fn select_concepts(
    active: &[(ConceptId, &ConceptRepr)],
    statement: &StatementEncoding,
    params: &ModelParams,
    k2: usize,
) -> Selection {
    if active.is_empty() {
        log::warn!("empty active set, nothing to select");
        return Selection {
            ranked: Vec::new(),
            empty: true,
        };
    }
    let logits = concept_logits(active.iter().map(|(_, r)| *r), statement, params);
    let cands: Vec<(ConceptId, f64)> = active.iter().map(|(c, _)| *c).zip(logits).collect();
    Selection {
        ranked: rank_by_logit(&cands, k2),
        empty: false,
    }
}
