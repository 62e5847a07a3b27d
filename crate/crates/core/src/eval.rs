//! Prediction scoring: accuracy, confusion matrices, and confusion-matrix
//! entropy.
//!
//! The confusion-matrix entropy summarizes how scattered the row-normalized
//! matrix is: the support-weighted mean of the Shannon entropies of its rows.
//! A perfect classifier scores 0; uniformly scattered predictions score
//! log(C). An unweighted variant (plain mean over nonzero rows) is available
//! behind a flag.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entropy::LogBase;

/// Row = true class, column = predicted class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub class_names: Vec<String>,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("predictions and labels have different lengths ({predictions} vs {labels})")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("class index {0} outside the {1}-class manifest")]
    UnknownClass(usize, usize),
    #[error("confusion matrix has no observations")]
    AllZero,
}

impl ConfusionMatrix {
    pub fn dimension(&self) -> usize {
        self.class_names.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.dimension()).map(|i| self.counts[i][i]).sum()
    }

    /// Row sums (per-class support).
    pub fn supports(&self) -> Vec<u64> {
        self.counts.iter().map(|row| row.iter().sum()).collect()
    }
}

/// Weighting of per-row entropies in [`cm_entropy_with`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowWeighting {
    /// Weight each row by its share of the total support.
    Support,
    /// Plain mean over rows with nonzero support.
    Uniform,
}

/// Full evaluation report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub cm: ConfusionMatrix,
    /// Rows divided by their sums; zero-support rows stay all-zero.
    pub cm_normalized: Vec<Vec<f64>>,
    pub cm_entropy: f64,
    pub log_base: LogBase,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub support: u64,
}

/// Count (true, predicted) pairs into a C×C matrix.
pub fn confusion_matrix(
    predictions: &[usize],
    labels: &[usize],
    class_names: &[String],
) -> Result<ConfusionMatrix, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    let dim = class_names.len();
    let mut counts = vec![vec![0u64; dim]; dim];
    for (&pred, &truth) in predictions.iter().zip(labels) {
        if pred >= dim {
            return Err(EvalError::UnknownClass(pred, dim));
        }
        if truth >= dim {
            return Err(EvalError::UnknownClass(truth, dim));
        }
        counts[truth][pred] += 1;
    }
    Ok(ConfusionMatrix {
        counts,
        class_names: class_names.to_vec(),
    })
}

/// Divide each row by its sum. Zero-support rows become all-zero rows; their
/// indices are returned alongside.
pub fn row_normalize(cm: &ConfusionMatrix) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut normalized = Vec::with_capacity(cm.counts.len());
    let mut zero_rows = Vec::new();
    for (i, row) in cm.counts.iter().enumerate() {
        let sum: u64 = row.iter().sum();
        if sum == 0 {
            zero_rows.push(i);
            normalized.push(vec![0.0; row.len()]);
        } else {
            normalized.push(row.iter().map(|&c| c as f64 / sum as f64).collect());
        }
    }
    (normalized, zero_rows)
}

/// Confusion-matrix entropy with support weighting.
pub fn cm_entropy(cm: &ConfusionMatrix, base: LogBase) -> Result<f64, EvalError> {
    cm_entropy_with(cm, base, RowWeighting::Support)
}

/// Confusion-matrix entropy; zero-support rows are excluded under either
/// weighting.
pub fn cm_entropy_with(
    cm: &ConfusionMatrix,
    base: LogBase,
    weighting: RowWeighting,
) -> Result<f64, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::AllZero);
    }
    let (normalized, _) = row_normalize(cm);
    let supports = cm.supports();
    let mut entropy = 0.0;
    let mut nonzero_rows = 0usize;
    for (row, &support) in normalized.iter().zip(&supports) {
        if support == 0 {
            continue;
        }
        nonzero_rows += 1;
        let row_entropy: f64 = row
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * base.log(p))
            .sum();
        match weighting {
            RowWeighting::Support => entropy += support as f64 / total as f64 * row_entropy,
            RowWeighting::Uniform => entropy += row_entropy,
        }
    }
    if weighting == RowWeighting::Uniform {
        entropy /= nonzero_rows as f64;
    }
    Ok(entropy.max(0.0))
}

/// Score predictions into a full report.
pub fn evaluate(
    predictions: &[usize],
    labels: &[usize],
    class_names: &[String],
    base: LogBase,
) -> Result<EvalReport, EvalError> {
    let cm = confusion_matrix(predictions, labels, class_names)?;
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::AllZero);
    }
    let accuracy = cm.trace() as f64 / total as f64;
    let (cm_normalized, _) = row_normalize(&cm);
    let entropy = cm_entropy(&cm, base)?;

    let dim = cm.dimension();
    let supports = cm.supports();
    let per_class = (0..dim)
        .map(|c| {
            let tp = cm.counts[c][c];
            let predicted: u64 = (0..dim).map(|r| cm.counts[r][c]).sum();
            ClassMetrics {
                class: class_names[c].clone(),
                precision: if predicted == 0 {
                    0.0
                } else {
                    tp as f64 / predicted as f64
                },
                recall: if supports[c] == 0 {
                    0.0
                } else {
                    tp as f64 / supports[c] as f64
                },
                support: supports[c],
            }
        })
        .collect();

    Ok(EvalReport {
        accuracy,
        per_class,
        cm,
        cm_normalized,
        cm_entropy: entropy,
        log_base: base,
    })
}

/// Plain-text heat table of a row-normalized matrix for terminal inspection.
pub fn render_heat_table(normalized: &[Vec<f64>], class_names: &[String]) -> String {
    let width = class_names
        .iter()
        .map(String::len)
        .max()
        .unwrap_or(4)
        .clamp(4, 16);
    let mut out = String::new();
    out.push_str(&format!("{:>width$} |", "", width = width));
    for name in class_names {
        out.push_str(&format!(
            " {:>width$}",
            truncate(name, width),
            width = width
        ));
    }
    out.push('\n');
    for (i, row) in normalized.iter().enumerate() {
        out.push_str(&format!(
            "{:>width$} |",
            truncate(&class_names[i], width),
            width = width
        ));
        for &p in row {
            out.push_str(&format!(" {:>width$.2}", p, width = width));
        }
        out.push('\n');
    }
    out
}

fn truncate(s: &str, width: usize) -> &str {
    if s.len() <= width {
        s
    } else {
        &s[..width]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    fn matrix(counts: Vec<Vec<u64>>) -> ConfusionMatrix {
        let n = counts.len();
        ConfusionMatrix {
            counts,
            class_names: names(n),
        }
    }

    #[test]
    fn perfect_predictions_are_diagonal() {
        let cm = confusion_matrix(&[0, 1, 2, 1], &[0, 1, 2, 1], &names(3)).unwrap();
        assert_eq!(cm.trace(), 4);
        assert_eq!(cm.total(), 4);
        assert_eq!(cm.counts[1][1], 2);
    }

    #[test]
    fn systematic_confusion_lands_off_diagonal() {
        let cm = confusion_matrix(&[1, 1, 1], &[0, 0, 0], &names(2)).unwrap();
        assert_eq!(cm.counts[0][1], 3);
        assert_eq!(cm.trace(), 0);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(matches!(
            confusion_matrix(&[0, 1], &[0], &names(2)),
            Err(EvalError::LengthMismatch { .. })
        ));
        assert!(matches!(
            confusion_matrix(&[5], &[0], &names(2)),
            Err(EvalError::UnknownClass(5, 2))
        ));
    }

    #[test]
    fn row_normalization_and_zero_rows() {
        let cm = matrix(vec![vec![2, 2], vec![0, 0]]);
        let (normalized, zero_rows) = row_normalize(&cm);
        assert_eq!(normalized[0], vec![0.5, 0.5]);
        assert_eq!(normalized[1], vec![0.0, 0.0]);
        assert_eq!(zero_rows, vec![1]);
    }

    #[test]
    fn identity_matrix_normalizes_to_itself() {
        let cm = matrix(vec![vec![3, 0], vec![0, 7]]);
        let (normalized, zero_rows) = row_normalize(&cm);
        assert_eq!(normalized[0], vec![1.0, 0.0]);
        assert_eq!(normalized[1], vec![0.0, 1.0]);
        assert!(zero_rows.is_empty());
    }

    #[test]
    fn cm_entropy_of_identity_is_zero() {
        let cm = matrix(vec![vec![5, 0, 0], vec![0, 2, 0], vec![0, 0, 9]]);
        assert_eq!(cm_entropy(&cm, LogBase::Two).unwrap(), 0.0);
    }

    #[test]
    fn cm_entropy_of_uniform_rows_is_log_c() {
        let cm = matrix(vec![vec![4, 4, 4], vec![1, 1, 1], vec![7, 7, 7]]);
        let h = cm_entropy(&cm, LogBase::Two).unwrap();
        assert!((h - 3.0f64.log2()).abs() < 1e-9);
        let h_nats = cm_entropy(&cm, LogBase::E).unwrap();
        assert!((h_nats - 3.0f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn cm_entropy_hand_computed_two_class_example() {
        let cm = matrix(vec![vec![8, 2], vec![1, 9]]);
        let h = cm_entropy(&cm, LogBase::Two).unwrap();
        assert!((h - 0.5955).abs() < 1e-4, "h = {h}");
    }

    #[test]
    fn unweighted_variant_averages_rows() {
        // Unequal supports separate the two weightings.
        let cm = matrix(vec![vec![30, 10], vec![1, 1]]);
        let h_row0 = -(0.75f64 * 0.75f64.log2() + 0.25 * 0.25f64.log2());
        let weighted = cm_entropy_with(&cm, LogBase::Two, RowWeighting::Support).unwrap();
        let uniform = cm_entropy_with(&cm, LogBase::Two, RowWeighting::Uniform).unwrap();
        assert!((weighted - (40.0 / 42.0 * h_row0 + 2.0 / 42.0 * 1.0)).abs() < 1e-12);
        assert!((uniform - (h_row0 + 1.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn cm_entropy_is_bounded_by_log_c() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let c = rng.random_range(2..6);
            let counts: Vec<Vec<u64>> = (0..c)
                .map(|_| (0..c).map(|_| rng.random_range(0..20)).collect())
                .collect();
            let cm = matrix(counts);
            if cm.total() == 0 {
                continue;
            }
            for weighting in [RowWeighting::Support, RowWeighting::Uniform] {
                let h = cm_entropy_with(&cm, LogBase::Two, weighting).unwrap();
                assert!(h >= 0.0);
                assert!(h <= (c as f64).log2() + 1e-12, "h = {h} for {c} classes");
            }
        }
    }

    #[test]
    fn cm_entropy_is_invariant_under_simultaneous_relabeling() {
        let cm = matrix(vec![vec![8, 2, 0], vec![1, 9, 3], vec![2, 2, 2]]);
        // Permutation (0 1 2) -> (2 0 1) applied to rows and columns.
        let perm = [2usize, 0, 1];
        let mut permuted = vec![vec![0u64; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                permuted[perm[i]][perm[j]] = cm.counts[i][j];
            }
        }
        let cm_perm = matrix(permuted);
        let a = cm_entropy(&cm, LogBase::Two).unwrap();
        let b = cm_entropy(&cm_perm, LogBase::Two).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn evaluate_ties_accuracy_to_the_trace() {
        let predictions = vec![0, 1, 1, 2, 0];
        let labels = vec![0, 1, 2, 2, 1];
        let report = evaluate(&predictions, &labels, &names(3), LogBase::Two).unwrap();
        assert!((report.accuracy - 3.0 / 5.0).abs() < 1e-15);
        assert_eq!(report.cm.trace(), 3);
        let matches = predictions
            .iter()
            .zip(&labels)
            .filter(|(p, l)| p == l)
            .count();
        assert_eq!(matches as u64, report.cm.trace());
    }

    #[test]
    fn all_correct_report() {
        let report = evaluate(&[0, 1, 2], &[0, 1, 2], &names(3), LogBase::Two).unwrap();
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.cm_entropy, 0.0);
        for metrics in &report.per_class {
            assert_eq!(metrics.precision, 1.0);
            assert_eq!(metrics.recall, 1.0);
        }
    }

    #[test]
    fn heat_table_renders_without_panicking() {
        let cm = matrix(vec![vec![8, 2], vec![1, 9]]);
        let (normalized, _) = row_normalize(&cm);
        let table = render_heat_table(&normalized, &cm.class_names);
        assert!(table.contains("0.80"));
        assert!(table.lines().count() == 3);
    }
}
