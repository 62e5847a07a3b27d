//! Process entropy over activity transitions.
//!
//! The complexity of a log is measured as the Shannon entropy of its
//! transition distribution: every consecutive activity pair inside a trace is
//! one observation, probabilities are pair frequencies over the total
//! transition count, and the entropy is the usual -Σ p·log(p) over the
//! observed pairs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eventlog::EventLog;

/// Logarithm base used for entropy values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LogBase {
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "e")]
    E,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Two => x.log2(),
            LogBase::E => x.ln(),
        }
    }
}

impl std::fmt::Display for LogBase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LogBase::Two => write!(f, "2"),
            LogBase::E => write!(f, "e"),
        }
    }
}

/// Complexity band of a log.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Complexity {
    Low,
    Medium,
    High,
}

/// Band thresholds; the defaults put Low below 3, Medium in [3, 5], and High
/// above 5.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandThresholds {
    pub low: f64,
    pub high: f64,
}

impl Default for BandThresholds {
    fn default() -> Self {
        Self {
            low: 3.0,
            high: 5.0,
        }
    }
}

/// Frequencies of ordered activity pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionModel {
    /// (from, to) -> count, ordered for deterministic iteration.
    pub counts: BTreeMap<(String, String), u64>,
    pub total_transitions: u64,
    /// Sorted activity labels occurring in any observed pair.
    pub alphabet: Vec<String>,
}

impl TransitionModel {
    /// Transitions sorted by descending count, then by pair label.
    pub fn top_transitions(&self, limit: usize) -> Vec<(&str, &str, u64, f64)> {
        let mut pairs: Vec<_> = self.counts.iter().collect();
        pairs.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        pairs
            .into_iter()
            .take(limit)
            .map(|((from, to), &count)| {
                (
                    from.as_str(),
                    to.as_str(),
                    count,
                    count as f64 / self.total_transitions as f64,
                )
            })
            .collect()
    }
}

/// Entropy of a log's transition distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub entropy: f64,
    pub log_base: LogBase,
    /// Set by [`normalize_entropies`]; entropy divided by the maximum over
    /// the compared logs.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub normalized: Option<f64>,
    pub complexity: Complexity,
    pub transition_count: u64,
}

#[derive(Debug, Error)]
pub enum EntropyError {
    #[error("log has no traces")]
    EmptyLog,
    #[error("log has no transitions (all traces have a single event)")]
    NoTransitions,
    #[error("cannot normalize: all entropies are zero")]
    AllZeroEntropy,
}

/// Count consecutive activity pairs per trace. Traces with fewer than two
/// events contribute nothing; pairs never cross trace boundaries.
pub fn count_transitions(log: &EventLog) -> Result<TransitionModel, EntropyError> {
    if log.traces.is_empty() {
        return Err(EntropyError::EmptyLog);
    }
    let mut counts: BTreeMap<(String, String), u64> = BTreeMap::new();
    let mut total = 0u64;
    for trace in &log.traces {
        for pair in trace.events.windows(2) {
            let key = (pair[0].activity.clone(), pair[1].activity.clone());
            *counts.entry(key).or_insert(0) += 1;
            total += 1;
        }
    }
    let mut alphabet: Vec<String> = counts
        .keys()
        .flat_map(|(a, b)| [a.clone(), b.clone()])
        .collect();
    alphabet.sort();
    alphabet.dedup();
    Ok(TransitionModel {
        counts,
        total_transitions: total,
        alphabet,
    })
}

/// Shannon entropy of the transition distribution in the chosen base.
pub fn process_entropy(
    model: &TransitionModel,
    base: LogBase,
) -> Result<EntropyReport, EntropyError> {
    process_entropy_with(model, base, &BandThresholds::default())
}

/// As [`process_entropy`] with configurable band thresholds.
pub fn process_entropy_with(
    model: &TransitionModel,
    base: LogBase,
    bands: &BandThresholds,
) -> Result<EntropyReport, EntropyError> {
    if model.total_transitions == 0 {
        return Err(EntropyError::NoTransitions);
    }
    let total = model.total_transitions as f64;
    let mut entropy = 0.0;
    for &count in model.counts.values() {
        // Only observed pairs are stored, so p > 0 by construction.
        let p = count as f64 / total;
        entropy -= p * base.log(p);
    }
    // Guard against -0.0 from a single observed pair.
    let entropy = if entropy <= 0.0 { 0.0 } else { entropy };
    Ok(EntropyReport {
        entropy,
        log_base: base,
        normalized: None,
        complexity: complexity_class_with(entropy, bands),
        transition_count: model.total_transitions,
    })
}

/// Set each report's normalized entropy to its share of the maximum.
pub fn normalize_entropies(reports: &mut [EntropyReport]) -> Result<(), EntropyError> {
    let max = reports
        .iter()
        .map(|r| r.entropy)
        .fold(f64::NEG_INFINITY, f64::max);
    if reports.is_empty() || max <= 0.0 {
        return Err(EntropyError::AllZeroEntropy);
    }
    for report in reports.iter_mut() {
        report.normalized = Some(report.entropy / max);
    }
    Ok(())
}

/// Complexity band under the default thresholds.
pub fn complexity_class(entropy: f64) -> Complexity {
    complexity_class_with(entropy, &BandThresholds::default())
}

/// Band membership: both thresholds belong to the medium band.
pub fn complexity_class_with(entropy: f64, bands: &BandThresholds) -> Complexity {
    if entropy < bands.low {
        Complexity::Low
    } else if entropy <= bands.high {
        Complexity::Medium
    } else {
        Complexity::High
    }
}
