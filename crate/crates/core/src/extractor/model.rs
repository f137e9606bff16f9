use ndarray::{s, Array1, Array2, Axis};

use super::loss::{bce_logits, sigmoid};
use super::routing::route_paths;
use super::selection::{concept_logits, deactivate};
use super::{EncodedExample, ExtractorError};
use crate::encoder::{
    encode_concept_traced, encode_statement_traced, ConceptRepr, ConceptTrace, EncoderError, Gradients, ModelParams,
    StatementEncoding, StatementTrace,
};
use crate::subgraph::{Subgraph, UNREACHABLE};

/// `P(e|x) = σ(h_e W_2 h_x)` for every subgraph edge, `h_e = h_head ⊕ r ⊕ h_tail`.
pub fn score_triples(
    sub: &Subgraph,
    concepts: &[ConceptRepr],
    statement: &StatementEncoding,
    params: &ModelParams,
) -> Vec<f64> {
    triple_logits(sub, concepts, statement, params).0.into_iter().map(sigmoid).collect()
}

fn triple_logits(
    sub: &Subgraph,
    concepts: &[ConceptRepr],
    statement: &StatementEncoding,
    params: &ModelParams,
) -> (Vec<f64>, Array1<f64>) {
    let d = params.config.dim;
    let u = params.triple_bilinear.dot(&statement.pooled);
    let (u_head, u_rel, u_tail) = (u.slice(s![..2 * d]), u.slice(s![2 * d..3 * d]), u.slice(s![3 * d..]));
    let head_part: Vec<f64> = concepts.iter().map(|c| c.vector.dot(&u_head)).collect();
    let tail_part: Vec<f64> = concepts.iter().map(|c| c.vector.dot(&u_tail)).collect();
    let rel_part = params.relation_embedding.dot(&u_rel);
    let logits = sub
        .edges()
        .iter()
        .zip(sub.edge_ends())
        .map(|(t, &(h, tl))| head_part[h] + rel_part[t.rel.index()] + tail_part[tl])
        .collect();
    (logits, u)
}

/// Everything computed for one example by a forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub statement: StatementEncoding,
    statement_trace: StatementTrace,
    /// Per subgraph node (local index).
    pub concepts: Vec<ConceptRepr>,
    concept_traces: Vec<ConceptTrace>,
    /// Per subgraph edge.
    pub triple_logits: Vec<f64>,
    pub triple_prob: Vec<f64>,
    /// Per subgraph node.
    pub routing: Vec<f64>,
    /// Active candidates as local indices, in routing rank order.
    pub active: Vec<usize>,
    /// Per active candidate.
    pub concept_logits: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ExampleLosses {
    pub triple: f64,
    pub concept: f64,
    pub total: f64,
    /// Bridge concepts that survived deactivation.
    pub covered: usize,
    pub bridge_total: usize,
    /// No triples took part in the triple loss.
    pub triple_empty: bool,
}

/// Runs the model; `active` overrides the top-`k1` cut when given.
pub fn forward(
    ex: &EncodedExample,
    params: &ModelParams,
    k1: usize,
    active: Option<&[usize]>,
) -> Result<Forward, ExtractorError> {
    let (statement, statement_trace) = encode_statement_traced(&ex.statement, params)?;
    let sub = &ex.subgraph;
    let mut concepts = Vec::with_capacity(sub.len());
    let mut concept_traces = Vec::with_capacity(sub.len());
    for (v, tokens) in ex.concept_tokens.iter().enumerate() {
        let dist = sub.distances()[v];
        let dist = (dist != UNREACHABLE).then_some(dist);
        let (r, t) = encode_concept_traced(tokens, dist, &statement, params)?;
        concepts.push(r);
        concept_traces.push(t);
    }
    let (triple_logits, _) = triple_logits(sub, &concepts, &statement, params);
    finite("triple_logits", &triple_logits)?;
    let triple_prob: Vec<f64> = triple_logits.iter().map(|&z| sigmoid(z)).collect();
    let routing = route_paths(sub, &triple_prob);
    let active = match active {
        Some(a) => a.to_vec(),
        None => deactivate(sub, &routing, k1),
    };
    let concept_logits = concept_logits(active.iter().map(|&v| &concepts[v]), &statement, params);
    finite("concept_logits", &concept_logits)?;
    Ok(Forward {
        statement,
        statement_trace,
        concepts,
        concept_traces,
        triple_logits,
        triple_prob,
        routing,
        active,
        concept_logits,
    })
}

fn finite(name: &str, values: &[f64]) -> Result<(), ExtractorError> {
    if values.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(EncoderError::NumericalInstability(name.to_string()).into())
    }
}

/// Which triples take part in the triple loss; `None` means all.
pub type TripleMask<'a> = Option<&'a [bool]>;

impl Forward {
    pub fn concept_prob(&self) -> Vec<f64> {
        self.concept_logits.iter().map(|&z| sigmoid(z)).collect()
    }

    fn labels(&self, ex: &EncodedExample, mask: TripleMask<'_>) -> (Vec<usize>, Vec<bool>, Vec<bool>) {
        let edges: Vec<usize> = (0..ex.positive.len())
            .filter(|&e| mask.is_none_or(|m| m[e]))
            .collect();
        let edge_labels = edges.iter().map(|&e| ex.positive[e]).collect();
        let active_labels = self.active.iter().map(|&v| ex.is_bridge[v]).collect();
        (edges, edge_labels, active_labels)
    }

    pub fn losses(&self, ex: &EncodedExample, lambda_triple: f64, lambda_concept: f64, mask: TripleMask<'_>) -> ExampleLosses {
        self.losses_and_logit_grads(ex, lambda_triple, lambda_concept, mask).0
    }

    fn losses_and_logit_grads(
        &self,
        ex: &EncodedExample,
        lambda_triple: f64,
        lambda_concept: f64,
        mask: TripleMask<'_>,
    ) -> (ExampleLosses, Vec<f64>, Vec<f64>) {
        let (edges, edge_labels, active_labels) = self.labels(ex, mask);
        let logits: Vec<f64> = edges.iter().map(|&e| self.triple_logits[e]).collect();
        let (triple, g_sel) = bce_logits(&logits, &edge_labels);
        let mut g_triple = vec![0.0; self.triple_logits.len()];
        for (&e, g) in edges.iter().zip(g_sel) {
            g_triple[e] = lambda_triple * g;
        }
        let (concept, g_concept) = bce_logits(&self.concept_logits, &active_labels);
        let g_concept = g_concept.into_iter().map(|g| lambda_concept * g).collect();
        if edges.is_empty() {
            log::warn!("example {}: no triples in the triple loss", ex.id);
        }
        let losses = ExampleLosses {
            triple,
            concept,
            total: lambda_triple * triple + lambda_concept * concept,
            covered: active_labels.iter().filter(|&&b| b).count(),
            bridge_total: ex.is_bridge.iter().filter(|&&b| b).count(),
            triple_empty: edges.is_empty(),
        };
        (losses, g_triple, g_concept)
    }

    /// Gradients of `λ1·L_triple + λ2·L_concept` with the active set held fixed.
    pub fn backward(
        &self,
        ex: &EncodedExample,
        params: &ModelParams,
        lambda_triple: f64,
        lambda_concept: f64,
        mask: TripleMask<'_>,
    ) -> Result<(Gradients, ExampleLosses), ExtractorError> {
        let (losses, g_triple, g_concept) = self.losses_and_logit_grads(ex, lambda_triple, lambda_concept, mask);
        let d = params.config.dim;
        let sub = &ex.subgraph;
        let h_x = &self.statement.pooled;
        let mut grads = params.zeros_like();
        let mut d_concepts = Array2::<f64>::zeros((sub.len(), 2 * d));
        let mut d_hx = Array1::<f64>::zeros(d);

        // triples: logit = h_e · u with u = W_2 h_x
        let u = params.triple_bilinear.dot(h_x);
        let (u_head, u_rel, u_tail) = (u.slice(s![..2 * d]), u.slice(s![2 * d..3 * d]), u.slice(s![3 * d..]));
        let mut acc_he = Array1::<f64>::zeros(5 * d);
        for ((t, &(h, tl)), &g) in sub.edges().iter().zip(sub.edge_ends()).zip(&g_triple) {
            if g == 0.0 {
                continue;
            }
            d_concepts.row_mut(h).scaled_add(g, &u_head);
            d_concepts.row_mut(tl).scaled_add(g, &u_tail);
            grads.relation_embedding.row_mut(t.rel.index()).scaled_add(g, &u_rel);
            acc_he.slice_mut(s![..2 * d]).scaled_add(g, &self.concepts[h].vector);
            acc_he
                .slice_mut(s![2 * d..3 * d])
                .scaled_add(g, &params.relation_embedding.row(t.rel.index()));
            acc_he.slice_mut(s![3 * d..]).scaled_add(g, &self.concepts[tl].vector);
        }
        grads.triple_bilinear += &outer(&acc_he, h_x);
        d_hx += &params.triple_bilinear.t().dot(&acc_he);

        // concepts: logit = h_c · v with v = W_3 h_x
        let v = params.concept_bilinear.dot(h_x);
        let mut acc_hc = Array1::<f64>::zeros(2 * d);
        for (&node, &g) in self.active.iter().zip(&g_concept) {
            d_concepts.row_mut(node).scaled_add(g, &v);
            acc_hc.scaled_add(g, &self.concepts[node].vector);
        }
        grads.concept_bilinear += &outer(&acc_hc, h_x);
        d_hx += &params.concept_bilinear.t().dot(&acc_hc);

        let mut d_hidden = Array2::<f64>::zeros(self.statement.hidden.dim());
        for (node, trace) in self.concept_traces.iter().enumerate() {
            let row = d_concepts.row(node);
            if row.iter().all(|&x| x == 0.0) {
                continue;
            }
            trace.backward(row, &self.statement, params, &mut grads, &mut d_hidden);
        }
        self.statement_trace
            .backward(&self.statement, &d_hidden, &d_hx, params, &mut grads);

        if let Some(name) = grads.first_non_finite() {
            return Err(EncoderError::NumericalInstability(format!("gradient of {name}")).into());
        }
        Ok((grads, losses))
    }
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    a.view().insert_axis(Axis(1)).dot(&b.view().insert_axis(Axis(0)))
}
