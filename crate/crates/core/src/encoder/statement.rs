use ndarray::{Array1, Array2, Axis};

use super::{check_finite, softmax_rows, softmax_rows_backward, BlockParams, EncoderError, Gradients, ModelParams};

#[derive(Debug, Clone, PartialEq)]
pub struct StatementEncoding {
    /// `N × d` output of the last block.
    pub hidden: Array2<f64>,
    /// Column-wise max of `hidden`.
    pub pooled: Array1<f64>,
    /// Row that attains the max, per column.
    pub argmax: Vec<usize>,
}

#[derive(Debug, Clone)]
struct BlockCache {
    input: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: Array2<f64>,
    mid: Array2<f64>,
    act: Array2<f64>,
}

/// Forward record needed to backpropagate into the statement encoder.
#[derive(Debug, Clone)]
pub struct StatementTrace {
    tokens: Vec<u32>,
    blocks: Vec<BlockCache>,
}

pub fn encode_statement(tokens: &[u32], params: &ModelParams) -> Result<StatementEncoding, EncoderError> {
    encode_statement_traced(tokens, params).map(|(e, _)| e)
}

pub fn encode_statement_traced(
    tokens: &[u32],
    params: &ModelParams,
) -> Result<(StatementEncoding, StatementTrace), EncoderError> {
    let cfg = params.config;
    if tokens.is_empty() {
        return Err(EncoderError::EmptyStatement);
    }
    if tokens.len() > cfg.max_len {
        return Err(EncoderError::Length {
            len: tokens.len(),
            max: cfg.max_len,
        });
    }
    if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= cfg.vocab_size) {
        return Err(EncoderError::InvalidToken(bad));
    }
    let mut h = Array2::zeros((tokens.len(), cfg.dim));
    for (i, &t) in tokens.iter().enumerate() {
        let mut row = h.row_mut(i);
        row += &params.token_embedding.row(t as usize);
        row += &params.position_embedding.row(i);
    }
    let mut caches = Vec::with_capacity(params.blocks.len());
    for block in &params.blocks {
        let (out, cache) = block_forward(block, h);
        caches.push(cache);
        h = out;
    }
    check_finite("statement_hidden", h.iter().copied())?;
    let (pooled, argmax) = column_max(&h);
    Ok((
        StatementEncoding {
            hidden: h,
            pooled,
            argmax,
        },
        StatementTrace {
            tokens: tokens.to_vec(),
            blocks: caches,
        },
    ))
}

pub(crate) fn column_max(m: &Array2<f64>) -> (Array1<f64>, Vec<usize>) {
    let mut pooled = Array1::from_elem(m.ncols(), f64::NEG_INFINITY);
    let mut argmax = vec![0usize; m.ncols()];
    for (i, row) in m.rows().into_iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            if x > pooled[j] {
                pooled[j] = x;
                argmax[j] = i;
            }
        }
    }
    (pooled, argmax)
}

fn block_forward(p: &BlockParams, input: Array2<f64>) -> (Array2<f64>, BlockCache) {
    let scale = 1.0 / (input.ncols() as f64).sqrt();
    let q = input.dot(&p.query);
    let k = input.dot(&p.key);
    let v = input.dot(&p.value);
    let mut attn = q.dot(&k.t()) * scale;
    softmax_rows(&mut attn);
    let mid = &input + &attn.dot(&v);
    let act = (mid.dot(&p.ff_in) + &p.ff_in_bias).mapv(f64::tanh);
    let out = &mid + &act.dot(&p.ff_out) + &p.ff_out_bias;
    (
        out,
        BlockCache {
            input,
            q,
            k,
            v,
            attn,
            mid,
            act,
        },
    )
}

fn block_backward(p: &BlockParams, g: &mut BlockParams, c: &BlockCache, d_out: Array2<f64>) -> Array2<f64> {
    let scale = 1.0 / (c.input.ncols() as f64).sqrt();
    g.ff_out += &c.act.t().dot(&d_out);
    g.ff_out_bias += &d_out.sum_axis(Axis(0)).insert_axis(Axis(0));
    let d_act = d_out.dot(&p.ff_out.t());
    let d_pre = &d_act * &c.act.mapv(|a| 1.0 - a * a);
    g.ff_in += &c.mid.t().dot(&d_pre);
    g.ff_in_bias += &d_pre.sum_axis(Axis(0)).insert_axis(Axis(0));
    let d_mid = d_out + d_pre.dot(&p.ff_in.t());

    let d_attn = d_mid.dot(&c.v.t());
    let d_v = c.attn.t().dot(&d_mid);
    let d_scores = softmax_rows_backward(&c.attn, &d_attn) * scale;
    let d_q = d_scores.dot(&c.k);
    let d_k = d_scores.t().dot(&c.q);
    g.query += &c.input.t().dot(&d_q);
    g.key += &c.input.t().dot(&d_k);
    g.value += &c.input.t().dot(&d_v);
    d_mid + d_q.dot(&p.query.t()) + d_k.dot(&p.key.t()) + d_v.dot(&p.value.t())
}

impl StatementTrace {
    /// Accumulates parameter gradients given `dL/dH_x` and `dL/dh_x`.
    pub fn backward(
        &self,
        encoding: &StatementEncoding,
        d_hidden: &Array2<f64>,
        d_pooled: &Array1<f64>,
        params: &ModelParams,
        grads: &mut Gradients,
    ) {
        let mut d = d_hidden.clone();
        for (j, &row) in encoding.argmax.iter().enumerate() {
            d[[row, j]] += d_pooled[j];
        }
        for ((p, g), c) in params
            .blocks
            .iter()
            .zip(grads.blocks.iter_mut())
            .zip(&self.blocks)
            .rev()
        {
            d = block_backward(p, g, c, d);
        }
        for (i, &t) in self.tokens.iter().enumerate() {
            let row = d.row(i);
            let mut e = grads.token_embedding.row_mut(t as usize);
            e += &row;
            let mut pos = grads.position_embedding.row_mut(i);
            pos += &row;
        }
    }
}
