//! Next-activity prediction for business-process event logs.
//!
//! The crate parses event logs (CSV and XES), measures process complexity as
//! the Shannon entropy of the activity-transition distribution, routes each
//! log to a suitable predictor family based on its entropy band, and provides
//! two predictor families built from scratch:
//!
//! - a multi-attribute transformer encoder with dynamic full-history
//!   windowing, exact reverse-mode gradients, and Adam training
//!   ([`transformer`]),
//! - CART decision trees and bagged random forests over flattened prefix
//!   vectors ([`trees`]).
//!
//! Evaluation includes accuracy, confusion matrices, and confusion-matrix
//! entropy ([`eval`]). All numeric model code is generic over the scalar
//! type via [`Scalar`]; concrete aliases for `f32`/`f64` live at the crate
//! root.

pub mod entropy;
pub mod eval;
pub mod eventlog;
pub mod features;
pub mod linalg;
pub mod router;
pub mod scalar;
pub mod seed;
pub mod synth;
pub mod transformer;
pub mod trees;

pub use scalar::Scalar;

/// Single-precision matrix.
pub type Mat32 = linalg::Mat<f32>;
/// Double-precision matrix.
pub type Mat64 = linalg::Mat<f64>;

/// Single-precision transformer parameters.
pub type TransformerParams32 = transformer::TransformerParams<f32>;
/// Double-precision transformer parameters (used for gradient checking and
/// the default CLI training path).
pub type TransformerParams64 = transformer::TransformerParams<f64>;

/// Double-precision training state.
pub type TrainState64 = transformer::TrainState<f64>;

/// Double-precision decision tree.
pub type TreeNode64 = trees::TreeNode<f64>;
/// Double-precision random forest.
pub type ForestModel64 = trees::ForestModel<f64>;
