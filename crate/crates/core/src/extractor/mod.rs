//! Triple scoring, path routing, deactivation, concept selection and training.

mod loss;
mod model;
mod routing;
mod selection;
mod train;

use thiserror::Error;

use crate::encoder::{EncoderError, ModelParams, TokenVocab};
use crate::kg::{ConceptId, KnowledgeGraph, Triple};
use crate::subgraph::{CachedExample, Subgraph};
use crate::text::tokenize;

pub use loss::{bce, concept_loss, sigmoid, total_loss, triple_loss, ConceptLoss, TripleLoss, LOG_CLAMP};
pub use model::{forward, score_triples, ExampleLosses, Forward, TripleMask};
pub use routing::{route_paths, top_paths, ScoredPath};
pub use selection::{concept_logits, deactivate, rank_by_logit, select_concepts, Selection, DEFAULT_K1, DEFAULT_K2};
pub use train::{evaluate_recall, train, EpochReport, TrainConfig, TrainReport};

#[derive(Debug, Error)]
pub enum ExtractorError {
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("non-finite values at epoch {epoch}, step {step}: {what}")]
    NonFinite {
        epoch: usize,
        step: usize,
        what: String,
        /// Parameters before the failing step.
        last_good: Box<ModelParams>,
    },
}

/// An example in model-ready form.
#[derive(Debug, Clone)]
pub struct EncodedExample {
    pub id: String,
    /// Statement token ids, never empty.
    pub statement: Vec<u32>,
    /// Token ids per subgraph node (local index), each never empty.
    pub concept_tokens: Vec<Vec<u32>>,
    pub subgraph: Subgraph,
    /// Per subgraph edge: lies on a supervision path.
    pub positive: Vec<bool>,
    /// Per subgraph node: is a bridge concept.
    pub is_bridge: Vec<bool>,
}

impl EncodedExample {
    /// Statements longer than `max_len` tokens are truncated; unknown words
    /// map to the unknown token and empty token lists become `[unknown]`.
    pub fn new(cached: &CachedExample, graph: &KnowledgeGraph, vocab: &TokenVocab, max_len: usize) -> Self {
        let mut statement = vocab.encode(&cached.example.statement_tokens);
        if statement.len() > max_len {
            log::warn!(
                "example {}: statement truncated from {} to {} tokens",
                cached.example.id,
                statement.len(),
                max_len
            );
            statement.truncate(max_len);
        }
        if statement.is_empty() {
            statement.push(0);
        }
        let sub = &cached.subgraph;
        let concept_tokens = sub
            .nodes()
            .iter()
            .map(|&c| {
                let ids = vocab.encode(&tokenize(graph.surface(c)));
                if ids.is_empty() { vec![0] } else { ids }
            })
            .collect();
        let mut positive = vec![false; sub.edges().len()];
        for t in &cached.supervision.positives {
            if let Some(e) = sub.edge_index(t) {
                positive[e] = true;
            }
        }
        let mut is_bridge = vec![false; sub.len()];
        for &c in &cached.supervision.bridge {
            if let Some(v) = sub.local(c) {
                is_bridge[v] = true;
            }
        }
        Self {
            id: cached.example.id.clone(),
            statement,
            concept_tokens,
            subgraph: sub.clone(),
            positive,
            is_bridge,
        }
    }

    pub fn bridge(&self) -> Vec<ConceptId> {
        self.subgraph
            .nodes()
            .iter()
            .zip(&self.is_bridge)
            .filter(|(_, &b)| b)
            .map(|(&c, _)| c)
            .collect()
    }
}

/// Vocabulary over statement words and the surfaces of all subgraph nodes.
pub fn build_token_vocab(examples: &[CachedExample], graph: &KnowledgeGraph) -> TokenVocab {
    let mut words: Vec<String> = Vec::new();
    for ex in examples {
        words.extend(ex.example.statement_tokens.iter().cloned());
        for &c in ex.subgraph.nodes() {
            words.extend(tokenize(graph.surface(c)));
        }
    }
    TokenVocab::build(words.iter().map(String::as_str))
}

/// Scores, routing, active set and ranked selection for one example.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSubgraph {
    /// Per subgraph edge, in `Subgraph::edges` order.
    pub triple_prob: Vec<f64>,
    /// Per subgraph node, in `Subgraph::nodes` order.
    pub routing: Vec<f64>,
    /// Routing rank order.
    pub active: Vec<ConceptId>,
    /// `(concept, P(c|x))`, best first.
    pub selected: Vec<(ConceptId, f64)>,
}

impl ScoredSubgraph {
    pub fn triple_probability(&self, sub: &Subgraph, t: &Triple) -> Option<f64> {
        sub.edge_index(t).map(|e| self.triple_prob[e])
    }
}

pub fn score_example(
    ex: &EncodedExample,
    params: &ModelParams,
    k1: usize,
    k2: usize,
) -> Result<ScoredSubgraph, ExtractorError> {
    let f = forward(ex, params, k1, None)?;
    let nodes = ex.subgraph.nodes();
    let cands: Vec<(ConceptId, f64)> = f.active.iter().map(|&v| nodes[v]).zip(f.concept_logits.iter().copied()).collect();
    if cands.is_empty() {
        log::warn!("example {}: empty active set", ex.id);
    }
    Ok(ScoredSubgraph {
        selected: rank_by_logit(&cands, k2),
        active: f.active.iter().map(|&v| nodes[v]).collect(),
        triple_prob: f.triple_prob,
        routing: f.routing,
    })
}
