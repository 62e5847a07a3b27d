//! Parameter tensors, initialization, and the position table.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ModelError, TransformerConfig};
use crate::linalg::Mat;
use crate::scalar::Scalar;

/// Learnable tensors of one encoder block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams<S> {
    pub w_q: Mat<S>,
    pub w_k: Mat<S>,
    pub w_v: Mat<S>,
    pub w_o: Mat<S>,
    pub ln1_gain: Mat<S>,
    pub ln1_bias: Mat<S>,
    pub ln2_gain: Mat<S>,
    pub ln2_bias: Mat<S>,
    pub ffn_w1: Mat<S>,
    pub ffn_b1: Mat<S>,
    pub ffn_w2: Mat<S>,
    pub ffn_b2: Mat<S>,
}

/// Tensors per block, used by the flat tensor index.
pub const BLOCK_TENSORS: usize = 12;

/// All model tensors. The position table is fixed (not learnable); every
/// other tensor participates in gradients and Adam updates through the flat
/// index exposed by [`TransformerParams::learnable`].
#[derive(Clone, Debug, PartialEq)]
pub struct TransformerParams<S> {
    /// One table per categorical attribute: vocab_size × embed_dim.
    pub embeddings: Vec<Mat<S>>,
    /// concat_width × d_model.
    pub input_w: Mat<S>,
    /// 1 × d_model.
    pub input_b: Mat<S>,
    /// max_len × d_model, sinusoidal, fixed.
    pub positional: Mat<S>,
    pub blocks: Vec<BlockParams<S>>,
    /// head_input_dim × num_classes.
    pub head_w: Mat<S>,
    /// 1 × num_classes.
    pub head_b: Mat<S>,
}

impl<S: Scalar> TransformerParams<S> {
    /// Number of learnable tensors (position table excluded).
    pub fn n_learnable(&self) -> usize {
        self.embeddings.len() + 2 + self.blocks.len() * BLOCK_TENSORS + 2
    }

    pub fn learnable(&self, index: usize) -> &Mat<S> {
        let e = self.embeddings.len();
        if index < e {
            return &self.embeddings[index];
        }
        match index - e {
            0 => &self.input_w,
            1 => &self.input_b,
            i => {
                let i = i - 2;
                let blocks = self.blocks.len() * BLOCK_TENSORS;
                if i < blocks {
                    let block = &self.blocks[i / BLOCK_TENSORS];
                    match i % BLOCK_TENSORS {
                        0 => &block.w_q,
                        1 => &block.w_k,
                        2 => &block.w_v,
                        3 => &block.w_o,
                        4 => &block.ln1_gain,
                        5 => &block.ln1_bias,
                        6 => &block.ln2_gain,
                        7 => &block.ln2_bias,
                        8 => &block.ffn_w1,
                        9 => &block.ffn_b1,
                        10 => &block.ffn_w2,
                        _ => &block.ffn_b2,
                    }
                } else if i - blocks == 0 {
                    &self.head_w
                } else {
                    &self.head_b
                }
            }
        }
    }

    pub fn learnable_mut(&mut self, index: usize) -> &mut Mat<S> {
        let e = self.embeddings.len();
        if index < e {
            return &mut self.embeddings[index];
        }
        match index - e {
            0 => &mut self.input_w,
            1 => &mut self.input_b,
            i => {
                let i = i - 2;
                let blocks = self.blocks.len() * BLOCK_TENSORS;
                if i < blocks {
                    let block = &mut self.blocks[i / BLOCK_TENSORS];
                    match i % BLOCK_TENSORS {
                        0 => &mut block.w_q,
                        1 => &mut block.w_k,
                        2 => &mut block.w_v,
                        3 => &mut block.w_o,
                        4 => &mut block.ln1_gain,
                        5 => &mut block.ln1_bias,
                        6 => &mut block.ln2_gain,
                        7 => &mut block.ln2_bias,
                        8 => &mut block.ffn_w1,
                        9 => &mut block.ffn_b1,
                        10 => &mut block.ffn_w2,
                        _ => &mut block.ffn_b2,
                    }
                } else if i - blocks == 0 {
                    &mut self.head_w
                } else {
                    &mut self.head_b
                }
            }
        }
    }

    pub fn learnable_name(&self, index: usize) -> String {
        let e = self.embeddings.len();
        if index < e {
            return format!("embedding[{index}]");
        }
        match index - e {
            0 => "input_w".to_string(),
            1 => "input_b".to_string(),
            i => {
                let i = i - 2;
                let blocks = self.blocks.len() * BLOCK_TENSORS;
                if i < blocks {
                    let names = [
                        "w_q", "w_k", "w_v", "w_o", "ln1_gain", "ln1_bias", "ln2_gain", "ln2_bias",
                        "ffn_w1", "ffn_b1", "ffn_w2", "ffn_b2",
                    ];
                    format!("block{}.{}", i / BLOCK_TENSORS, names[i % BLOCK_TENSORS])
                } else if i - blocks == 0 {
                    "head_w".to_string()
                } else {
                    "head_b".to_string()
                }
            }
        }
    }

    /// Same shapes, all zeros. Used for gradients and optimizer moments.
    pub fn zeros_like(&self) -> Self {
        Self {
            embeddings: self.embeddings.iter().map(Mat::zeros_like).collect(),
            input_w: self.input_w.zeros_like(),
            input_b: self.input_b.zeros_like(),
            positional: self.positional.zeros_like(),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockParams {
                    w_q: b.w_q.zeros_like(),
                    w_k: b.w_k.zeros_like(),
                    w_v: b.w_v.zeros_like(),
                    w_o: b.w_o.zeros_like(),
                    ln1_gain: b.ln1_gain.zeros_like(),
                    ln1_bias: b.ln1_bias.zeros_like(),
                    ln2_gain: b.ln2_gain.zeros_like(),
                    ln2_bias: b.ln2_bias.zeros_like(),
                    ffn_w1: b.ffn_w1.zeros_like(),
                    ffn_b1: b.ffn_b1.zeros_like(),
                    ffn_w2: b.ffn_w2.zeros_like(),
                    ffn_b2: b.ffn_b2.zeros_like(),
                })
                .collect(),
            head_w: self.head_w.zeros_like(),
            head_b: self.head_b.zeros_like(),
        }
    }

    pub fn all_finite(&self) -> bool {
        (0..self.n_learnable()).all(|i| self.learnable(i).all_finite())
    }
}

/// Sinusoidal position table: row `pos` holds sin(pos / 10000^(2i/d_model))
/// in even columns and the matching cosine in odd columns.
pub fn positional_encoding<S: Scalar>(max_len: usize, d_model: usize) -> Mat<S> {
    assert!(d_model.is_multiple_of(2), "d_model must be even");
    Mat::from_fn(max_len, d_model, |pos, col| {
        let i = col / 2;
        let exponent = 2.0 * i as f64 / d_model as f64;
        let angle = pos as f64 / 10000f64.powf(exponent);
        let value = if col % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        };
        S::from_f64_lossy(value)
    })
}

/// Initialize parameters: weights uniform in ±sqrt(6 / (fan_in + fan_out)),
/// biases zero, layer-norm gains one. Deterministic given the seed.
pub fn init_params<S: Scalar>(
    config: &TransformerConfig,
    seed: u64,
) -> Result<TransformerParams<S>, ModelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut glorot = |rows: usize, cols: usize| -> Mat<S> {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        Mat::from_fn(rows, cols, |_, _| {
            S::from_f64_lossy(rng.random_range(-bound..bound))
        })
    };

    let embeddings: Vec<Mat<S>> = config
        .embeddings
        .iter()
        .map(|spec| glorot(spec.vocab_size, spec.embed_dim))
        .collect();
    let input_w = glorot(config.concat_width(), config.d_model);
    let blocks: Vec<BlockParams<S>> = (0..config.num_blocks)
        .map(|_| BlockParams {
            w_q: glorot(config.d_model, config.d_model),
            w_k: glorot(config.d_model, config.d_model),
            w_v: glorot(config.d_model, config.d_model),
            w_o: glorot(config.d_model, config.d_model),
            ln1_gain: ones(config.d_model),
            ln1_bias: Mat::zeros(1, config.d_model),
            ln2_gain: ones(config.d_model),
            ln2_bias: Mat::zeros(1, config.d_model),
            ffn_w1: glorot(config.d_model, config.ff_dim),
            ffn_b1: Mat::zeros(1, config.ff_dim),
            ffn_w2: glorot(config.ff_dim, config.d_model),
            ffn_b2: Mat::zeros(1, config.d_model),
        })
        .collect();
    let head_w = glorot(config.head_input_dim(), config.num_classes);

    Ok(TransformerParams {
        embeddings,
        input_w,
        input_b: Mat::zeros(1, config.d_model),
        positional: positional_encoding(config.max_len, config.d_model),
        blocks,
        head_w,
        head_b: Mat::zeros(1, config.num_classes),
    })
}

fn ones<S: Scalar>(n: usize) -> Mat<S> {
    Mat::from_fn(1, n, |_, _| S::one())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::transformer::EmbeddingSpec;

    /// Small configuration shared by the forward/backward test suites.
    pub(crate) fn tiny_config() -> TransformerConfig {
        TransformerConfig {
            d_model: 8,
            num_heads: 2,
            ff_dim: 16,
            num_blocks: 1,
            max_len: 4,
            dropout_rate: 0.0,
            embeddings: vec![EmbeddingSpec {
                attribute: "activity".to_string(),
                vocab_size: 5,
                embed_dim: 4,
            }],
            num_seq_numeric: 2,
            num_scalar_features: 1,
            num_classes: 3,
        }
    }

    #[test]
    fn position_table_closed_forms() {
        let p: Mat<f64> = positional_encoding(6, 8);
        for i in 0..4 {
            assert_eq!(p.get(0, 2 * i), 0.0);
            assert_eq!(p.get(0, 2 * i + 1), 1.0);
        }
        // First frequency is 1, so row 1 starts with sin(1), cos(1).
        assert!((p.get(1, 0) - 1f64.sin()).abs() < 1e-12);
        assert!((p.get(1, 0) - 0.8415).abs() < 1e-4);
        assert!((p.get(1, 1) - 1f64.cos()).abs() < 1e-12);
        assert!(p.iter().all(|&x| (-1.0..=1.0).contains(&x)));
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let config = tiny_config();
        let a: TransformerParams<f64> = init_params(&config, 7).unwrap();
        let b: TransformerParams<f64> = init_params(&config, 7).unwrap();
        assert_eq!(a, b);
        let c: TransformerParams<f64> = init_params(&config, 8).unwrap();
        assert_ne!(a, c);

        // Fan bound on the input projection: sqrt(6 / (6 + 8)).
        let bound = (6.0 / (config.concat_width() + config.d_model) as f64).sqrt();
        assert!(a.input_w.iter().all(|&x| x.abs() <= bound));
        // Layer-norm gains start at one, biases at zero.
        assert!(a.blocks[0].ln1_gain.iter().all(|&x| x == 1.0));
        assert!(a.blocks[0].ln1_bias.iter().all(|&x| x == 0.0));
        assert!(a.head_b.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn invalid_head_split_is_rejected() {
        let config = TransformerConfig {
            num_heads: 3,
            ..tiny_config()
        };
        assert!(matches!(
            init_params::<f64>(&config, 0),
            Err(ModelError::InvalidConfig(_))
        ));
    }

    #[test]
    fn tensor_index_round_trips() {
        let params: TransformerParams<f64> = init_params(&tiny_config(), 0).unwrap();
        assert_eq!(params.n_learnable(), 1 + 2 + 12 + 2);
        let names: Vec<String> = (0..params.n_learnable())
            .map(|i| params.learnable_name(i))
            .collect();
        assert_eq!(names[0], "embedding[0]");
        assert_eq!(names[1], "input_w");
        assert_eq!(names[3], "block0.w_q");
        assert_eq!(names[names.len() - 2], "head_w");
        assert_eq!(names[names.len() - 1], "head_b");
        // Mutating through the index touches the named tensor.
        let mut params = params;
        params.learnable_mut(1).set(0, 0, 42.0);
        assert_eq!(params.input_w.get(0, 0), 42.0);
    }
}
