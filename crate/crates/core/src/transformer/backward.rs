//! Exact reverse-mode gradients for the cross-entropy objective.
//!
//! Every derivative is accumulated by hand through the softmax head, the
//! flatten, each encoder block (layer norms, feed-forward, multi-head
//! attention), the input projection, and the embedding tables. The test
//! suite checks every tensor against central finite differences.

use rand_chacha::ChaCha8Rng;

use super::forward::{forward_sample_cached, BlockCache, SampleCache};
use super::{ModelError, TransformerConfig, TransformerParams};
use crate::features::PrefixSample;
use crate::linalg::Mat;
use crate::scalar::Scalar;
use crate::transformer::params::BlockParams;

/// Loss, match count, and gradients for one mini-batch.
pub struct LossOutput<S> {
    /// Mean negative log-likelihood (natural log) over the batch.
    pub loss: f64,
    /// Samples whose argmax prediction equals the label.
    pub correct: usize,
    pub grads: TransformerParams<S>,
    /// Class probabilities, one row per sample.
    pub probs: Mat<S>,
}

/// Mean cross-entropy over the batch and exact gradients for every
/// learnable tensor. Dropout is applied only when an RNG is supplied.
pub fn loss_and_grads<S: Scalar>(
    batch: &[&PrefixSample],
    params: &TransformerParams<S>,
    config: &TransformerConfig,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<LossOutput<S>, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let mut grads = params.zeros_like();
    let mut probs = Mat::zeros(batch.len(), config.num_classes);
    let mut loss = 0.0;
    let mut correct = 0usize;
    let inv_batch = S::from_f64_lossy(1.0 / batch.len() as f64);

    for (i, sample) in batch.iter().enumerate() {
        let cache = forward_sample_cached(sample, params, config, dropout_rng.as_deref_mut())?;
        let p_label = cache.probs[sample.label].to_f64_lossy();
        loss -= p_label.max(f64::MIN_POSITIVE).ln();
        let argmax = cache
            .probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite probabilities"))
            .map(|(c, _)| c)
            .unwrap_or(0);
        if argmax == sample.label {
            correct += 1;
        }
        probs.row_mut(i).copy_from_slice(&cache.probs);

        // Softmax + cross-entropy: d logits = (p - onehot) / batch.
        let mut dlogits: Vec<S> = cache.probs.clone();
        dlogits[sample.label] -= S::one();
        for d in dlogits.iter_mut() {
            *d *= inv_batch;
        }
        backward_sample(sample, params, config, &cache, &dlogits, &mut grads);
    }

    loss /= batch.len() as f64;
    if !loss.is_finite() {
        return Err(ModelError::NonFinite("batch loss".to_string()));
    }
    Ok(LossOutput {
        loss,
        correct,
        grads,
        probs,
    })
}

fn backward_sample<S: Scalar>(
    sample: &PrefixSample,
    params: &TransformerParams<S>,
    config: &TransformerConfig,
    cache: &SampleCache<S>,
    dlogits: &[S],
    grads: &mut TransformerParams<S>,
) {
    // Dense head: logits = head_input · W + b.
    for (c, &d) in dlogits.iter().enumerate() {
        let v = grads.head_b.get(0, c) + d;
        grads.head_b.set(0, c, v);
    }
    for (i, &h) in cache.head_input.iter().enumerate() {
        if h != S::zero() {
            for (c, &d) in dlogits.iter().enumerate() {
                let v = grads.head_w.get(i, c) + h * d;
                grads.head_w.set(i, c, v);
            }
        }
    }
    // d head_input, reshaped back to the sequence; the scalar tail carries
    // no parameters, and padded rows were zeroed in the forward pass.
    let mut dy = Mat::zeros(config.max_len, config.d_model);
    for pos in 0..config.max_len {
        if !sample.mask[pos] {
            continue;
        }
        for c in 0..config.d_model {
            let flat = pos * config.d_model + c;
            let mut acc = S::zero();
            for (cls, &d) in dlogits.iter().enumerate() {
                acc += params.head_w.get(flat, cls) * d;
            }
            dy.set(pos, c, acc);
        }
    }

    for (block_idx, block_cache) in cache.blocks.iter().enumerate().rev() {
        dy = backward_block(
            &dy,
            &params.blocks[block_idx],
            block_cache,
            config.num_heads,
            &mut grads.blocks[block_idx],
        );
    }

    // Input projection: X = concat · W_in + b_in (+ fixed position table).
    grads.input_b.add_assign(&dy.col_sums());
    grads.input_w.add_assign(&cache.concat.matmul_at(&dy));
    let dconcat = dy.matmul_bt(&params.input_w);

    // Embedding tables: route each position's slice to the row it used.
    for pos in 0..config.max_len {
        let mut offset = 0;
        for (a, spec) in config.embeddings.iter().enumerate() {
            let index = sample.categorical[a][pos];
            let table = &mut grads.embeddings[a];
            for c in 0..spec.embed_dim {
                let v = table.get(index, c) + dconcat.get(pos, offset + c);
                table.set(index, c, v);
            }
            offset += spec.embed_dim;
        }
    }
}

/// Backward through one encoder block; returns the gradient at its input.
fn backward_block<S: Scalar>(
    dy: &Mat<S>,
    block: &BlockParams<S>,
    cache: &BlockCache<S>,
    num_heads: usize,
    grads: &mut BlockParams<S>,
) -> Mat<S> {
    // Second sub-layer: Y = LN2(A + Drop2(FFN(A))).
    let dr2 = layer_norm_backward(
        dy,
        &cache.ln2,
        &block.ln2_gain,
        &mut grads.ln2_gain,
        &mut grads.ln2_bias,
    );
    let mut da = dr2.clone();
    let dffn = apply_dropout_grad(&dr2, &cache.drop2);

    // FFN(a) = ReLU(a·W1 + b1)·W2 + b2.
    grads.ffn_b2.add_assign(&dffn.col_sums());
    grads.ffn_w2.add_assign(&cache.relu.matmul_at(&dffn));
    let mut dz = dffn.matmul_bt(&block.ffn_w2);
    for (g, &z) in dz.data_mut().iter_mut().zip(cache.z.data()) {
        if z <= S::zero() {
            *g = S::zero();
        }
    }
    grads.ffn_b1.add_assign(&dz.col_sums());
    grads.ffn_w1.add_assign(&cache.a.matmul_at(&dz));
    da.add_assign(&dz.matmul_bt(&block.ffn_w1));

    // First sub-layer: A = LN1(X + Drop1(MHA(X))).
    let dr1 = layer_norm_backward(
        &da,
        &cache.ln1,
        &block.ln1_gain,
        &mut grads.ln1_gain,
        &mut grads.ln1_bias,
    );
    let mut dx = dr1.clone();
    let dmha = apply_dropout_grad(&dr1, &cache.drop1);

    // Output projection of the attention sub-layer.
    grads.w_o.add_assign(&cache.mha.concat.matmul_at(&dmha));
    let dconcat = dmha.matmul_bt(&block.w_o);

    let d_model = dx.cols();
    let d_k = d_model / num_heads;
    let scale = S::from_f64_lossy(1.0 / (d_k as f64).sqrt());
    let mut dq = Mat::zeros(dx.rows(), d_model);
    let mut dk = Mat::zeros(dx.rows(), d_model);
    let mut dv = Mat::zeros(dx.rows(), d_model);
    for h in 0..num_heads {
        let start = h * d_k;
        let d_out = dconcat.col_block(start, d_k);
        let weights = &cache.mha.head_weights[h];
        let v_h = cache.mha.v.col_block(start, d_k);
        let q_h = cache.mha.q.col_block(start, d_k);
        let k_h = cache.mha.k.col_block(start, d_k);

        let dv_h = weights.matmul_at(&d_out);
        let dweights = d_out.matmul_bt(&v_h);
        // Row softmax backward: ds = w ⊙ (dw - Σ dw·w). Masked keys carry
        // zero weight, so their score gradient vanishes automatically.
        let mut dscores = Mat::zeros(weights.rows(), weights.cols());
        for r in 0..weights.rows() {
            let wrow = weights.row(r);
            let dwrow = dweights.row(r);
            let dot = wrow.iter().zip(dwrow).map(|(&w, &d)| w * d).sum::<S>();
            for (j, g) in dscores.row_mut(r).iter_mut().enumerate() {
                *g = wrow[j] * (dwrow[j] - dot) * scale;
            }
        }
        dq.add_col_block(start, &dscores.matmul(&k_h));
        dk.add_col_block(start, &dscores.matmul_at(&q_h));
        dv.add_col_block(start, &dv_h);
    }

    grads.w_q.add_assign(&cache.x.matmul_at(&dq));
    grads.w_k.add_assign(&cache.x.matmul_at(&dk));
    grads.w_v.add_assign(&cache.x.matmul_at(&dv));
    dx.add_assign(&dq.matmul_bt(&block.w_q));
    dx.add_assign(&dk.matmul_bt(&block.w_k));
    dx.add_assign(&dv.matmul_bt(&block.w_v));
    dx
}

/// Backward through y = gain ⊙ x̂ + bias with x̂ the row-normalized input:
/// dx = inv_std · (dx̂ - mean(dx̂) - x̂ · mean(dx̂ ⊙ x̂)).
fn layer_norm_backward<S: Scalar>(
    dy: &Mat<S>,
    cache: &super::forward::LnCache<S>,
    gain: &Mat<S>,
    dgain: &mut Mat<S>,
    dbias: &mut Mat<S>,
) -> Mat<S> {
    let cols = dy.cols();
    let n = S::from_f64_lossy(cols as f64);
    let mut dx = Mat::zeros(dy.rows(), cols);
    for r in 0..dy.rows() {
        let dyrow = dy.row(r);
        let xhat = cache.xhat.row(r);
        for c in 0..cols {
            let g0 = dgain.get(0, c) + dyrow[c] * xhat[c];
            dgain.set(0, c, g0);
            let b0 = dbias.get(0, c) + dyrow[c];
            dbias.set(0, c, b0);
        }
        let dxhat: Vec<S> = (0..cols).map(|c| dyrow[c] * gain.get(0, c)).collect();
        let mean_dxhat = dxhat.iter().copied().sum::<S>() / n;
        let mean_proj = dxhat.iter().zip(xhat).map(|(&d, &h)| d * h).sum::<S>() / n;
        let inv_std = cache.inv_std[r];
        for c in 0..cols {
            dx.set(
                r,
                c,
                inv_std * (dxhat[c] - mean_dxhat - xhat[c] * mean_proj),
            );
        }
    }
    dx
}

fn apply_dropout_grad<S: Scalar>(upstream: &Mat<S>, drop: &Option<Mat<S>>) -> Mat<S> {
    match drop {
        Some(mask) => {
            let mut out = upstream.clone();
            for (g, &m) in out.data_mut().iter_mut().zip(mask.data()) {
                *g *= m;
            }
            out
        }
        None => upstream.clone(),
    }
}
