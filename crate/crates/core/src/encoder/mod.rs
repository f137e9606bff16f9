//! Statement and concept encoders with hand-written backward passes.
//!
//! The statement encoder is a token + position embedding followed by `L`
//! single-head self-attention blocks (residual attention, residual tanh
//! feed-forward). Concepts are encoded by attending from their tokens to the
//! statement, max-pooling, a linear projection, and a distance embedding.

mod checkpoint;
mod concept;
mod params;
mod statement;
mod vocab;

use thiserror::Error;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use concept::{distance_row, encode_concept, encode_concept_traced, ConceptRepr, ConceptTrace};
pub use params::{BlockParams, Gradients, ModelConfig, ModelParams};
pub use statement::{encode_statement, encode_statement_traced, StatementEncoding, StatementTrace};
pub use vocab::{TokenVocab, UNKNOWN_TOKEN};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncoderError {
    #[error("statement has {len} tokens, longer than the maximum {max}")]
    Length { len: usize, max: usize },
    #[error("statement has no tokens")]
    EmptyStatement,
    #[error("concept has no tokens")]
    InvalidConcept,
    #[error("token id {0} outside the vocabulary")]
    InvalidToken(u32),
    #[error("non-finite values in {0}")]
    NumericalInstability(String),
}

pub(crate) fn softmax_rows(m: &mut ndarray::Array2<f64>) {
    for mut row in m.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|x| (x - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|x| x / sum);
    }
}

/// Backward through a row softmax: `dS = A ⊙ (dA − rowsum(dA ⊙ A))`.
pub(crate) fn softmax_rows_backward(
    probs: &ndarray::Array2<f64>,
    d_probs: &ndarray::Array2<f64>,
) -> ndarray::Array2<f64> {
    let mut out = probs * d_probs;
    for (mut row, p) in out.rows_mut().into_iter().zip(probs.rows()) {
        let dot = row.sum();
        row.zip_mut_with(&p, |o, &pi| *o -= pi * dot);
    }
    out
}

pub(crate) fn check_finite(name: &str, values: impl IntoIterator<Item = f64>) -> Result<(), EncoderError> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(EncoderError::NumericalInstability(name.to_string()))
    }
}
