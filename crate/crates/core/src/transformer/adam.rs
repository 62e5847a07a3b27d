//! Adam optimizer state and update step.

use serde::{Deserialize, Serialize};

use super::TransformerParams;
use crate::scalar::Scalar;

/// Adam hyperparameters with the standard defaults.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamHyper {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// Per-epoch training record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

/// Parameters plus optimizer moments and training history.
#[derive(Clone, Debug)]
pub struct TrainState<S> {
    pub params: TransformerParams<S>,
    pub first_moment: TransformerParams<S>,
    pub second_moment: TransformerParams<S>,
    /// Completed optimizer steps (one per mini-batch).
    pub step: u64,
    pub history: Vec<EpochStats>,
}

impl<S: Scalar> TrainState<S> {
    pub fn new(params: TransformerParams<S>) -> Self {
        let first_moment = params.zeros_like();
        let second_moment = params.zeros_like();
        Self {
            params,
            first_moment,
            second_moment,
            step: 0,
            history: Vec::new(),
        }
    }
}

/// One bias-corrected Adam update over every learnable tensor.
pub fn adam_step<S: Scalar>(
    state: &mut TrainState<S>,
    grads: &TransformerParams<S>,
    hyper: &AdamHyper,
) {
    state.step += 1;
    let t = state.step as i32;
    let beta1 = S::from_f64_lossy(hyper.beta1);
    let beta2 = S::from_f64_lossy(hyper.beta2);
    let one = S::one();
    let lr = S::from_f64_lossy(hyper.learning_rate);
    let eps = S::from_f64_lossy(hyper.epsilon);
    let bias1 = one - beta1.powi(t);
    let bias2 = one - beta2.powi(t);

    for i in 0..state.params.n_learnable() {
        let g = grads.learnable(i).data();
        let m = state.first_moment.learnable_mut(i).data_mut();
        for (m_e, &g_e) in m.iter_mut().zip(g) {
            *m_e = beta1 * *m_e + (one - beta1) * g_e;
        }
        let v = state.second_moment.learnable_mut(i).data_mut();
        for (v_e, &g_e) in v.iter_mut().zip(g) {
            *v_e = beta2 * *v_e + (one - beta2) * g_e * g_e;
        }
        // Borrow moments immutably while the parameters update.
        let m = state.first_moment.learnable(i).data();
        let v = state.second_moment.learnable(i).data();
        let p = state.params.learnable_mut(i).data_mut();
        for ((p_e, &m_e), &v_e) in p.iter_mut().zip(m).zip(v) {
            let m_hat = m_e / bias1;
            let v_hat = v_e / bias2;
            *p_e -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}
