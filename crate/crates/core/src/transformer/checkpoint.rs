//! Versioned JSON checkpoint for trained models.
//!
//! The checkpoint carries the configuration, the hash of the dataset
//! manifest it was trained against, and every parameter tensor with its
//! shape. Loading rejects version, manifest-hash, and shape mismatches.

use serde::{Deserialize, Serialize};

use super::adam::EpochStats;
use super::params::init_params;
use super::{ModelError, TransformerConfig, TransformerParams};
use crate::linalg::Mat;
use crate::scalar::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorData {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: TransformerConfig,
    pub manifest_hash: u64,
    pub class_names: Vec<String>,
    pub history: Vec<EpochStats>,
    pub tensors: Vec<TensorData>,
}

fn tensor_data<S: Scalar>(name: String, mat: &Mat<S>) -> TensorData {
    TensorData {
        name,
        rows: mat.rows(),
        cols: mat.cols(),
        data: mat.iter().map(|v| v.to_f64_lossy()).collect(),
    }
}

/// Capture parameters into a checkpoint container.
pub fn save_checkpoint<S: Scalar>(
    params: &TransformerParams<S>,
    config: &TransformerConfig,
    manifest_hash: u64,
    class_names: &[String],
    history: &[EpochStats],
) -> Checkpoint {
    let mut tensors: Vec<TensorData> = (0..params.n_learnable())
        .map(|i| tensor_data(params.learnable_name(i), params.learnable(i)))
        .collect();
    tensors.push(tensor_data("positional".to_string(), &params.positional));
    Checkpoint {
        version: CHECKPOINT_VERSION,
        config: config.clone(),
        manifest_hash,
        class_names: class_names.to_vec(),
        history: history.to_vec(),
        tensors,
    }
}

/// Restore parameters, verifying the version, the manifest hash (when one is
/// expected), and every tensor shape against the stored configuration.
pub fn load_checkpoint<S: Scalar>(
    checkpoint: &Checkpoint,
    expected_manifest_hash: Option<u64>,
) -> Result<(TransformerParams<S>, TransformerConfig, Vec<String>), ModelError> {
    if checkpoint.version != CHECKPOINT_VERSION {
        return Err(ModelError::ManifestMismatch(format!(
            "checkpoint version {} (supported: {})",
            checkpoint.version, CHECKPOINT_VERSION
        )));
    }
    if let Some(expected) = expected_manifest_hash {
        if expected != checkpoint.manifest_hash {
            return Err(ModelError::ManifestMismatch(format!(
                "checkpoint was trained against manifest {:016x}, found {:016x}",
                checkpoint.manifest_hash, expected
            )));
        }
    }
    let config = checkpoint.config.clone();
    // Shape template; every tensor is overwritten below.
    let mut params: TransformerParams<S> = init_params(&config, 0)?;
    let expected_tensors = params.n_learnable() + 1;
    if checkpoint.tensors.len() != expected_tensors {
        return Err(ModelError::ShapeMismatch(format!(
            "{} tensors stored, {} expected",
            checkpoint.tensors.len(),
            expected_tensors
        )));
    }
    for i in 0..params.n_learnable() {
        let stored = &checkpoint.tensors[i];
        let name = params.learnable_name(i);
        let target = params.learnable_mut(i);
        fill(target, stored, &name)?;
    }
    let positional = checkpoint.tensors.last().expect("tensor list non-empty");
    fill(&mut params.positional, positional, "positional")?;
    if !params.all_finite() {
        return Err(ModelError::NonFinite("checkpoint tensors".to_string()));
    }
    Ok((params, config, checkpoint.class_names.clone()))
}

fn fill<S: Scalar>(target: &mut Mat<S>, stored: &TensorData, name: &str) -> Result<(), ModelError> {
    if stored.name != name
        || stored.rows != target.rows()
        || stored.cols != target.cols()
        || stored.data.len() != stored.rows * stored.cols
    {
        return Err(ModelError::ShapeMismatch(format!(
            "tensor {name}: stored {} ({}x{}), expected {}x{}",
            stored.name,
            stored.rows,
            stored.cols,
            target.rows(),
            target.cols()
        )));
    }
    for (t, &v) in target.data_mut().iter_mut().zip(&stored.data) {
        *t = S::from_f64_lossy(v);
    }
    Ok(())
}
