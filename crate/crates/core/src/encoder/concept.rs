use ndarray::{s, Array1, Array2, Axis};

use super::statement::column_max;
use super::{softmax_rows, softmax_rows_backward, EncoderError, Gradients, ModelParams, StatementEncoding};

/// Fused concept representation `[h_text; h_dist]` of width `2d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptRepr {
    pub vector: Array1<f64>,
}

impl ConceptRepr {
    pub fn text_part(&self) -> ndarray::ArrayView1<'_, f64> {
        let d = self.vector.len() / 2;
        self.vector.slice(s![..d])
    }

    pub fn distance_part(&self) -> ndarray::ArrayView1<'_, f64> {
        let d = self.vector.len() / 2;
        self.vector.slice(s![d..])
    }
}

#[derive(Debug, Clone)]
pub struct ConceptTrace {
    tokens: Vec<u32>,
    token_rows: Array2<f64>,
    attn: Array2<f64>,
    /// Per pooled column: row of `[H_tok | H_con]` that won the max.
    argmax: Vec<usize>,
    pooled: Array1<f64>,
    distance_row: usize,
}

impl ConceptTrace {
    /// Attention weights of concept tokens over statement tokens (`m × N`).
    pub fn attention(&self) -> &Array2<f64> {
        &self.attn
    }
}

/// Embedding row for a concept distance; `None` means unreachable.
pub fn distance_row(distance: Option<u32>, max_dist: u32) -> usize {
    match distance {
        Some(d) => d.min(max_dist) as usize,
        None => max_dist as usize + 1,
    }
}

pub fn encode_concept(
    tokens: &[u32],
    distance: Option<u32>,
    statement: &StatementEncoding,
    params: &ModelParams,
) -> Result<ConceptRepr, EncoderError> {
    encode_concept_traced(tokens, distance, statement, params).map(|(r, _)| r)
}

pub fn encode_concept_traced(
    tokens: &[u32],
    distance: Option<u32>,
    statement: &StatementEncoding,
    params: &ModelParams,
) -> Result<(ConceptRepr, ConceptTrace), EncoderError> {
    let cfg = params.config;
    let d = cfg.dim;
    if tokens.is_empty() {
        return Err(EncoderError::InvalidConcept);
    }
    if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= cfg.vocab_size) {
        return Err(EncoderError::InvalidToken(bad));
    }
    let x = &statement.hidden;
    let mut token_rows = Array2::zeros((tokens.len(), d));
    for (k, &t) in tokens.iter().enumerate() {
        token_rows.row_mut(k).assign(&params.token_embedding.row(t as usize));
    }

    let w = params.attention_similarity.row(0);
    let (w_tok, w_stmt, w_prod) = (w.slice(s![..d]), w.slice(s![d..2 * d]), w.slice(s![2 * d..]));
    // sim[k][j] = w_tok·t_k + w_stmt·x_j + (t_k ⊙ w_prod)·x_j
    let tok_term = token_rows.dot(&w_tok);
    let stmt_term = x.dot(&w_stmt);
    let mut attn = (&token_rows * &w_prod).dot(&x.t());
    for (mut row, &tk) in attn.rows_mut().into_iter().zip(&tok_term) {
        row.zip_mut_with(&stmt_term, |a, &sj| *a += tk + sj);
    }
    softmax_rows(&mut attn);
    let context = attn.dot(x);

    let mut joined = Array2::zeros((tokens.len(), 2 * d));
    joined.slice_mut(s![.., ..d]).assign(&token_rows);
    joined.slice_mut(s![.., d..]).assign(&context);
    let (pooled, argmax) = column_max(&joined);

    let text = pooled.dot(&params.text_projection) + params.text_projection_bias.row(0);
    let row = distance_row(distance, cfg.max_dist);
    let mut vector = Array1::zeros(2 * d);
    vector.slice_mut(s![..d]).assign(&text);
    vector.slice_mut(s![d..]).assign(&params.distance_embedding.row(row));

    Ok((
        ConceptRepr { vector },
        ConceptTrace {
            tokens: tokens.to_vec(),
            token_rows,
            attn,
            argmax,
            pooled,
            distance_row: row,
        },
    ))
}

impl ConceptTrace {
    /// Accumulates parameter gradients for `dL/dh_c` and adds the statement
    /// contribution into `d_statement` (`N × d`).
    pub fn backward(
        &self,
        d_repr: ndarray::ArrayView1<'_, f64>,
        statement: &StatementEncoding,
        params: &ModelParams,
        grads: &mut Gradients,
        d_statement: &mut Array2<f64>,
    ) {
        let d = params.config.dim;
        let x = &statement.hidden;
        let m = self.tokens.len();

        let mut dist_row = grads.distance_embedding.row_mut(self.distance_row);
        dist_row += &d_repr.slice(s![d..]);

        let d_text = d_repr.slice(s![..d]);
        grads.text_projection += &self
            .pooled
            .view()
            .insert_axis(Axis(1))
            .dot(&d_text.insert_axis(Axis(0)));
        let mut bias = grads.text_projection_bias.row_mut(0);
        bias += &d_text;
        let d_pooled = params.text_projection.dot(&d_text);

        let mut d_joined = Array2::<f64>::zeros((m, 2 * d));
        for (col, &row) in self.argmax.iter().enumerate() {
            d_joined[[row, col]] += d_pooled[col];
        }
        let mut d_tok = d_joined.slice(s![.., ..d]).to_owned();
        let d_ctx = d_joined.slice(s![.., d..]);

        let d_attn = d_ctx.dot(&x.t());
        *d_statement += &self.attn.t().dot(&d_ctx);
        let d_sim = softmax_rows_backward(&self.attn, &d_attn);

        let w = params.attention_similarity.row(0);
        let (w_tok, w_stmt, w_prod) = (w.slice(s![..d]), w.slice(s![d..2 * d]), w.slice(s![2 * d..]));
        let row_sums = d_sim.sum_axis(Axis(1));
        let col_sums = d_sim.sum_axis(Axis(0));
        // Σ_j dS[k][j] x_j, per concept token k
        let sx = d_sim.dot(x);
        // Σ_k dS[k][j] t_k, per statement token j
        let st = d_sim.t().dot(&self.token_rows);

        let mut g = grads.attention_similarity.row_mut(0);
        {
            let mut g_tok = g.slice_mut(s![..d]);
            g_tok += &self.token_rows.t().dot(&row_sums);
        }
        {
            let mut g_stmt = g.slice_mut(s![d..2 * d]);
            g_stmt += &x.t().dot(&col_sums);
        }
        {
            let mut g_prod = g.slice_mut(s![2 * d..]);
            g_prod += &(&self.token_rows * &sx).sum_axis(Axis(0));
        }

        for k in 0..m {
            let mut r = d_tok.row_mut(k);
            r.scaled_add(row_sums[k], &w_tok);
            r += &(&sx.row(k) * &w_prod);
        }
        for j in 0..x.nrows() {
            let mut r = d_statement.row_mut(j);
            r.scaled_add(col_sums[j], &w_stmt);
            r += &(&st.row(j) * &w_prod);
        }
        for (k, &t) in self.tokens.iter().enumerate() {
            let mut e = grads.token_embedding.row_mut(t as usize);
            e += &d_tok.row(k);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{encode_statement, ModelConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> ModelParams {
        let cfg = ModelConfig { dim: 5, blocks: 1, vocab_size: 9, max_len: 6, max_dist: 4 };
        ModelParams::init(cfg, &mut ChaCha8Rng::seed_from_u64(3))
    }

    #[test]
    fn single_statement_token_attends_fully() {
        let p = params();
        let stmt = encode_statement(&[4], &p).unwrap();
        let (_, trace) = encode_concept_traced(&[2], Some(1), &stmt, &p).unwrap();
        assert_eq!(trace.attention()[[0, 0]], 1.0);
        // pooled context half equals the statement row exactly
        let ctx = trace.pooled.slice(s![5..]).to_owned();
        let tok = trace.pooled.slice(s![..5]).to_owned();
        assert_eq!(ctx, stmt.hidden.row(0).to_owned());
        assert_eq!(tok, p.token_embedding.row(2).to_owned());
    }

    #[test]
    fn distance_lookup_and_clamp() {
        let p = params();
        let stmt = encode_statement(&[1, 2, 3], &p).unwrap();
        let src = encode_concept(&[5], Some(0), &stmt, &p).unwrap();
        assert_eq!(src.distance_part(), p.distance_embedding.row(0));
        let far5 = encode_concept(&[5], Some(5), &stmt, &p).unwrap();
        let far9 = encode_concept(&[6, 7], Some(9), &stmt, &p).unwrap();
        assert_eq!(far5.distance_part(), far9.distance_part());
        assert_eq!(far5.distance_part(), p.distance_embedding.row(4));
        let lost = encode_concept(&[5], None, &stmt, &p).unwrap();
        assert_eq!(lost.distance_part(), p.distance_embedding.row(5));
        assert_eq!(distance_row(None, 4), 5);
    }

    #[test]
    fn empty_concept_is_rejected() {
        let p = params();
        let stmt = encode_statement(&[1], &p).unwrap();
        assert_eq!(encode_concept(&[], Some(1), &stmt, &p), Err(EncoderError::InvalidConcept));
    }
}
