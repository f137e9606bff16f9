use ndarray::Array2;
use rand::Rng;

use crate::kg::RELATION_COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    /// Hidden width `d`.
    pub dim: usize,
    /// Number of self-attention blocks `L`.
    pub blocks: usize,
    pub vocab_size: usize,
    /// Longest statement, in tokens.
    pub max_len: usize,
    /// Distances above this share one embedding row.
    pub max_dist: u32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            blocks: 1,
            vocab_size: 1,
            max_len: 128,
            max_dist: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub query: Array2<f64>,
    pub key: Array2<f64>,
    pub value: Array2<f64>,
    pub ff_in: Array2<f64>,
    pub ff_in_bias: Array2<f64>,
    pub ff_out: Array2<f64>,
    pub ff_out_bias: Array2<f64>,
}

/// Every trainable tensor. Vectors are stored as `1 × n` matrices so that
/// all tensors share one type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    /// `vocab × d`, shared by statement and concept tokens.
    pub token_embedding: Array2<f64>,
    /// `max_len × d`.
    pub position_embedding: Array2<f64>,
    pub blocks: Vec<BlockParams>,
    /// `1 × 3d` weights of the `[u; v; u ⊙ v]` similarity.
    pub attention_similarity: Array2<f64>,
    /// `2d × d`.
    pub text_projection: Array2<f64>,
    /// `1 × d`.
    pub text_projection_bias: Array2<f64>,
    /// `(max_dist + 2) × d`; the last row is for unreachable concepts.
    pub distance_embedding: Array2<f64>,
    /// `34 × d`.
    pub relation_embedding: Array2<f64>,
    /// `5d × d` bilinear form between triples and the statement.
    pub triple_bilinear: Array2<f64>,
    /// `2d × d` bilinear form between concepts and the statement.
    pub concept_bilinear: Array2<f64>,
}

/// Gradients share the parameter layout.
pub type Gradients = ModelParams;

impl ModelParams {
    /// Uniform `±1/√d` for weight tables, zeros for biases.
    pub fn init<R: Rng>(config: ModelConfig, rng: &mut R) -> Self {
        let bound = 1.0 / (config.dim as f64).sqrt();
        let mut p = Self::zeros(config);
        for (name, t) in p.tensors_mut() {
            if !name.ends_with("_bias") {
                t.mapv_inplace(|_| rng.random_range(-bound..bound));
            }
        }
        p
    }

    pub fn zeros(config: ModelConfig) -> Self {
        let d = config.dim;
        let z = |r: usize, c: usize| Array2::<f64>::zeros((r, c));
        Self {
            config,
            token_embedding: z(config.vocab_size, d),
            position_embedding: z(config.max_len, d),
            blocks: (0..config.blocks)
                .map(|_| BlockParams {
                    query: z(d, d),
                    key: z(d, d),
                    value: z(d, d),
                    ff_in: z(d, d),
                    ff_in_bias: z(1, d),
                    ff_out: z(d, d),
                    ff_out_bias: z(1, d),
                })
                .collect(),
            attention_similarity: z(1, 3 * d),
            text_projection: z(2 * d, d),
            text_projection_bias: z(1, d),
            distance_embedding: z(config.max_dist as usize + 2, d),
            relation_embedding: z(RELATION_COUNT, d),
            triple_bilinear: z(5 * d, d),
            concept_bilinear: z(2 * d, d),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config)
    }

    /// Named tensors in a fixed order (also the checkpoint order).
    pub fn tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = vec![
            ("token_embedding".to_string(), &self.token_embedding),
            ("position_embedding".to_string(), &self.position_embedding),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("blocks.{i}.query"), &b.query));
            out.push((format!("blocks.{i}.key"), &b.key));
            out.push((format!("blocks.{i}.value"), &b.value));
            out.push((format!("blocks.{i}.ff_in"), &b.ff_in));
            out.push((format!("blocks.{i}.ff_in_bias"), &b.ff_in_bias));
            out.push((format!("blocks.{i}.ff_out"), &b.ff_out));
            out.push((format!("blocks.{i}.ff_out_bias"), &b.ff_out_bias));
        }
        out.extend([
            ("attention_similarity".to_string(), &self.attention_similarity),
            ("text_projection".to_string(), &self.text_projection),
            ("text_projection_bias".to_string(), &self.text_projection_bias),
            ("distance_embedding".to_string(), &self.distance_embedding),
            ("relation_embedding".to_string(), &self.relation_embedding),
            ("triple_bilinear".to_string(), &self.triple_bilinear),
            ("concept_bilinear".to_string(), &self.concept_bilinear),
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        let mut out = vec![
            ("token_embedding".to_string(), &mut self.token_embedding),
            ("position_embedding".to_string(), &mut self.position_embedding),
        ];
        for (i, b) in self.blocks.iter_mut().enumerate() {
            out.push((format!("blocks.{i}.query"), &mut b.query));
            out.push((format!("blocks.{i}.key"), &mut b.key));
            out.push((format!("blocks.{i}.value"), &mut b.value));
            out.push((format!("blocks.{i}.ff_in"), &mut b.ff_in));
            out.push((format!("blocks.{i}.ff_in_bias"), &mut b.ff_in_bias));
            out.push((format!("blocks.{i}.ff_out"), &mut b.ff_out));
            out.push((format!("blocks.{i}.ff_out_bias"), &mut b.ff_out_bias));
        }
        out.extend([
            ("attention_similarity".to_string(), &mut self.attention_similarity),
            ("text_projection".to_string(), &mut self.text_projection),
            ("text_projection_bias".to_string(), &mut self.text_projection_bias),
            ("distance_embedding".to_string(), &mut self.distance_embedding),
            ("relation_embedding".to_string(), &mut self.relation_embedding),
            ("triple_bilinear".to_string(), &mut self.triple_bilinear),
            ("concept_bilinear".to_string(), &mut self.concept_bilinear),
        ]);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// `self += scale · other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Self, scale: f64) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.scaled_add(scale, b);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.tensors_mut() {
            t.mapv_inplace(|x| x * factor);
        }
    }

    /// First tensor holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<String> {
        self.tensors()
            .into_iter()
            .find(|(_, t)| !t.iter().all(|x| x.is_finite()))
            .map(|(n, _)| n)
    }
}
