//! Entropy-driven model selection.
//!
//! High-entropy logs go to the transformer, low-entropy logs to tree models,
//! and the medium band follows a configurable policy target. Heavy class
//! imbalance attaches a warning rather than silently resampling.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::entropy::{complexity_class_with, BandThresholds, Complexity, EntropyReport};

/// Predictor family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelFamily {
    #[serde(rename = "daw-transformer")]
    DawTransformer,
    #[serde(rename = "random-forest")]
    RandomForest,
    #[serde(rename = "decision-tree")]
    DecisionTree,
}

impl std::fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelFamily::DawTransformer => write!(f, "daw-transformer"),
            ModelFamily::RandomForest => write!(f, "random-forest"),
            ModelFamily::DecisionTree => write!(f, "decision-tree"),
        }
    }
}

/// Target family for the medium entropy band.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediumTarget {
    Transformer,
    Trees,
}

/// Routing policy; thresholds default to the low/medium/high bands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoutingPolicy {
    pub low_threshold: f64,
    pub high_threshold: f64,
    pub medium_target: MediumTarget,
    /// Prefer a single readable tree over a forest on the tree path.
    pub prefer_interpretable: bool,
    /// Warn when max/min class count reaches this ratio.
    pub imbalance_ratio_warn: f64,
}

impl Default for RoutingPolicy {
    fn default() -> Self {
        Self {
            low_threshold: 3.0,
            high_threshold: 5.0,
            medium_target: MediumTarget::Transformer,
            prefer_interpretable: false,
            imbalance_ratio_warn: 10.0,
        }
    }
}

/// The selected family with its rationale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub chosen: ModelFamily,
    pub complexity: Complexity,
    pub rationale: String,
    pub warnings: Vec<String>,
}

/// Select a model family from the entropy report and label histogram.
pub fn route(
    report: &EntropyReport,
    label_counts: &BTreeMap<String, u64>,
    policy: &RoutingPolicy,
) -> RoutingDecision {
    let bands = BandThresholds {
        low: policy.low_threshold,
        high: policy.high_threshold,
    };
    let complexity = complexity_class_with(report.entropy, &bands);
    let tree_family = if policy.prefer_interpretable {
        ModelFamily::DecisionTree
    } else {
        ModelFamily::RandomForest
    };
    let chosen = match complexity {
        Complexity::High => ModelFamily::DawTransformer,
        Complexity::Low => tree_family,
        Complexity::Medium => match policy.medium_target {
            MediumTarget::Transformer => ModelFamily::DawTransformer,
            MediumTarget::Trees => tree_family,
        },
    };
    let rationale = format!(
        "process entropy {:.3} (base {}) falls in the {:?} band [low < {}, high > {}], selecting {}",
        report.entropy, report.log_base, complexity, policy.low_threshold, policy.high_threshold, chosen
    );

    let mut warnings = Vec::new();
    let max = label_counts.values().copied().max().unwrap_or(0);
    let min = label_counts
        .values()
        .copied()
        .filter(|&c| c > 0)
        .min()
        .unwrap_or(0);
    if min > 0 && max as f64 / min as f64 >= policy.imbalance_ratio_warn {
        warnings.push(format!(
            "class imbalance ratio {:.0} (max {max} / min {min}) at or above {:.0}: \
             consider the random-forest path or undersampling, noting that undersampling \
             discards majority-class examples",
            max as f64 / min as f64,
            policy.imbalance_ratio_warn
        ));
    }

    RoutingDecision {
        chosen,
        complexity,
        rationale,
        warnings,
    }
}
