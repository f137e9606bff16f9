/// Floor applied inside every logarithm.
pub const LOG_CLAMP: f64 = 1e-12;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy summed over items, with clamped logarithms.
pub fn bce(probs: &[f64], labels: &[bool]) -> f64 {
    assert_eq!(probs.len(), labels.len());
    probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| if y { -p.max(LOG_CLAMP).ln() } else { -(1.0 - p).max(LOG_CLAMP).ln() })
        .sum()
}

/// BCE from logits and its exact derivative per logit.
///
/// `1 − p` is taken as `σ(−z)` so that saturated logits keep full precision.
/// Where the clamp is active the derivative is zero.
pub(crate) fn bce_logits(logits: &[f64], labels: &[bool]) -> (f64, Vec<f64>) {
    let mut loss = 0.0;
    let grads = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| {
            let p = sigmoid(z);
            let q = sigmoid(-z);
            if y {
                loss -= p.max(LOG_CLAMP).ln();
                if p > LOG_CLAMP { -q } else { 0.0 }
            } else {
                loss -= q.max(LOG_CLAMP).ln();
                if q > LOG_CLAMP { p } else { 0.0 }
            }
        })
        .collect();
    (loss, grads)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripleLoss {
    pub value: f64,
    /// Set when the subgraph had no triples.
    pub empty: bool,
}

/// BCE over all subgraph triples, labelled by membership in the positives.
pub fn triple_loss(triple_prob: &[f64], positive: &[bool]) -> TripleLoss {
    TripleLoss {
        value: bce(triple_prob, positive),
        empty: triple_prob.is_empty(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConceptLoss {
    pub value: f64,
    /// Bridge concepts inside the active set.
    pub covered: usize,
    /// All bridge concepts of the example.
    pub bridge_total: usize,
}

/// BCE over the active concepts; bridge concepts outside the active set do
/// not contribute and only show up in the coverage counts.
pub fn concept_loss(active_prob: &[f64], active_is_bridge: &[bool], bridge_total: usize) -> ConceptLoss {
    ConceptLoss {
        value: bce(active_prob, active_is_bridge),
        covered: active_is_bridge.iter().filter(|&&b| b).count(),
        bridge_total,
    }
}

pub fn total_loss(triple: f64, concept: f64, lambda_triple: f64, lambda_concept: f64) -> f64 {
    lambda_triple * triple + lambda_concept * concept
}
