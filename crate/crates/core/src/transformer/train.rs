//! Mini-batch training loop with validation-based early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamHyper, EpochStats, TrainState};
use super::backward::loss_and_grads;
use super::forward::{forward_sample_cached, Mode};
use super::params::init_params;
use super::{forward, ModelError, TransformerConfig, TransformerParams};
use crate::features::{EncodedDataset, PrefixSample, SplitDataset};
use crate::scalar::Scalar;
use crate::seed::stage_seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Early stopping patience on validation loss; `None` disables early
    /// stopping (and best-parameter restoration).
    pub patience: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 50,
            patience: Some(10),
            seed: 0,
        }
    }
}

/// Train on the split's training part, validating per epoch. Early stopping
/// watches the validation loss and restores the best parameters.
pub fn train<S: Scalar>(
    split: &SplitDataset,
    config: &TransformerConfig,
    train_config: &TrainConfig,
) -> Result<TrainState<S>, ModelError> {
    if split.train.samples.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    config.validate()?;
    let params = init_params(config, stage_seed(train_config.seed, "init"))?;
    let mut state = TrainState::new(params);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(stage_seed(train_config.seed, "shuffle"));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(stage_seed(train_config.seed, "dropout"));
    let hyper = AdamHyper::with_learning_rate(train_config.learning_rate);

    let mut best: Option<(f64, TransformerParams<S>)> = None;
    let mut bad_epochs = 0usize;

    let mut order: Vec<usize> = (0..split.train.samples.len()).collect();
    for epoch in 1..=train_config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut epoch_correct = 0usize;
        for chunk in order.chunks(train_config.batch_size.max(1)) {
            let batch: Vec<&PrefixSample> =
                chunk.iter().map(|&i| &split.train.samples[i]).collect();
            let out = loss_and_grads(&batch, &state.params, config, Some(&mut dropout_rng))?;
            epoch_loss += out.loss * batch.len() as f64;
            epoch_correct += out.correct;
            adam_step(&mut state, &out.grads, &hyper);
        }
        let train_loss = epoch_loss / split.train.samples.len() as f64;
        if !train_loss.is_finite() || !state.params.all_finite() {
            return Err(ModelError::Diverged {
                epoch,
                loss: train_loss,
            });
        }
        let train_accuracy = epoch_correct as f64 / split.train.samples.len() as f64;

        let validation = if split.validation.samples.is_empty() {
            None
        } else {
            Some(evaluate_dataset(&state.params, config, &split.validation)?)
        };
        state.history.push(EpochStats {
            epoch,
            train_loss,
            train_accuracy,
            val_loss: validation.map(|(loss, _)| loss),
            val_accuracy: validation.map(|(_, acc)| acc),
        });

        if let (Some(patience), Some((val_loss, _))) = (train_config.patience, validation) {
            let improved = best.as_ref().is_none_or(|(b, _)| val_loss < *b);
            if improved {
                best = Some((val_loss, state.params.clone()));
                bad_epochs = 0;
            } else {
                bad_epochs += 1;
                if bad_epochs >= patience {
                    break;
                }
            }
        }
    }

    if let Some((_, params)) = best {
        state.params = params;
    }
    Ok(state)
}

/// Mean loss and accuracy over a dataset in eval mode.
pub fn evaluate_dataset<S: Scalar>(
    params: &TransformerParams<S>,
    config: &TransformerConfig,
    dataset: &EncodedDataset,
) -> Result<(f64, f64), ModelError> {
    if dataset.samples.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for sample in &dataset.samples {
        let cache = forward_sample_cached(sample, params, config, None)?;
        loss -= cache.probs[sample.label]
            .to_f64_lossy()
            .max(f64::MIN_POSITIVE)
            .ln();
        let argmax = argmax(&cache.probs);
        if argmax == sample.label {
            correct += 1;
        }
    }
    Ok((
        loss / dataset.samples.len() as f64,
        correct as f64 / dataset.samples.len() as f64,
    ))
}

/// Argmax predictions for every sample, in eval mode.
pub fn predict_batch<S: Scalar>(
    params: &TransformerParams<S>,
    config: &TransformerConfig,
    samples: &[PrefixSample],
) -> Result<Vec<usize>, ModelError> {
    samples
        .iter()
        .map(|sample| forward_sample_cached(sample, params, config, None).map(|c| argmax(&c.probs)))
        .collect()
}

/// Classes ranked by descending probability for one sample.
pub fn predict_next<S: Scalar>(
    state: &TrainState<S>,
    sample: &PrefixSample,
    config: &TransformerConfig,
    class_names: &[String],
) -> Result<Vec<(String, f64)>, ModelError> {
    if class_names.len() != config.num_classes {
        return Err(ModelError::ManifestMismatch(format!(
            "{} class names for a {}-class model",
            class_names.len(),
            config.num_classes
        )));
    }
    let probs = forward(&[sample], &state.params, config, Mode::Eval, None)?;
    let mut ranked: Vec<(String, f64)> = class_names
        .iter()
        .cloned()
        .zip(probs.row(0).iter().map(|p| p.to_f64_lossy()))
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite probabilities"));
    Ok(ranked)
}

fn argmax<S: Scalar>(row: &[S]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}
