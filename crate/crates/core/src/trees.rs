//! CART decision trees and bagged random forests over flattened prefix
//! vectors.
//!
//! Splits minimize Gini impurity over candidate thresholds at the midpoints
//! of sorted distinct feature values; ties break toward the lowest feature
//! index and threshold, so fitting is fully deterministic given the seed.
//! Categorical index sequences are treated as ordinal reals.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum TreeNode<S> {
    Leaf {
        class: usize,
        /// Per-class sample counts at the leaf; sums to the leaf's sample
        /// count, argmax (lowest index on ties) is the predicted class.
        distribution: Vec<u64>,
    },
    Split {
        feature: usize,
        /// Values <= threshold go left, values > threshold go right.
        threshold: S,
        left: Box<TreeNode<S>>,
        right: Box<TreeNode<S>>,
    },
}

impl<S: Scalar> TreeNode<S> {
    pub fn predict(&self, x: &[S]) -> usize {
        match self {
            TreeNode::Leaf { class, .. } => *class,
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if x[*feature] <= *threshold {
                    left.predict(x)
                } else {
                    right.predict(x)
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// The decision path taken for `x`, one step per split, ending in the
    /// leaf distribution.
    pub fn decision_path(&self, x: &[S]) -> Vec<PathStep<S>> {
        let mut path = Vec::new();
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf {
                    class,
                    distribution,
                } => {
                    path.push(PathStep::Leaf {
                        class: *class,
                        distribution: distribution.clone(),
                    });
                    return path;
                }
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let goes_left = x[*feature] <= *threshold;
                    path.push(PathStep::Split {
                        feature: *feature,
                        threshold: *threshold,
                        value: x[*feature],
                        went_left: goes_left,
                    });
                    node = if goes_left { left } else { right };
                }
            }
        }
    }
}

/// One step of a decision path.
#[derive(Clone, Debug, PartialEq)]
pub enum PathStep<S> {
    Split {
        feature: usize,
        threshold: S,
        value: S,
        went_left: bool,
    },
    Leaf {
        class: usize,
        distribution: Vec<u64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// Maximum number of split levels; unlimited when absent.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_split: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Fraction of features sampled per split; `None` uses sqrt(F)/F.
    pub feature_fraction: Option<f64>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 2,
            feature_fraction: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel<S> {
    pub trees: Vec<TreeNode<S>>,
    pub config: ForestConfig,
    pub class_names: Vec<String>,
    pub n_features: usize,
}

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("cannot compute impurity of an empty node")]
    EmptyNode,
    #[error("sample vectors have inconsistent lengths")]
    InconsistentVectors,
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("expected {expected} features, got {got}")]
    LayoutMismatch { expected: usize, got: usize },
    #[error("label {0} outside {1} classes")]
    LabelOutOfRange(usize, usize),
}

/// Gini impurity of a class-count histogram: 1 - Σ (n_c/N)².
pub fn gini(counts: &[u64]) -> Result<f64, TreeError> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(TreeError::EmptyNode);
    }
    let total = total as f64;
    Ok(1.0
        - counts
            .iter()
            .map(|&c| {
                let p = c as f64 / total;
                p * p
            })
            .sum::<f64>())
}

fn argmax_lowest(counts: &[u64]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

struct TreeBuilder<'a, S> {
    samples: &'a [Vec<S>],
    labels: &'a [usize],
    num_classes: usize,
    config: TreeConfig,
    /// Features sampled per split when set (forest mode).
    features_per_split: Option<usize>,
    rng: ChaCha8Rng,
}

impl<'a, S: Scalar> TreeBuilder<'a, S> {
    fn histogram(&self, indices: &[usize]) -> Vec<u64> {
        let mut counts = vec![0u64; self.num_classes];
        for &i in indices {
            counts[self.labels[i]] += 1;
        }
        counts
    }

    fn build(&mut self, indices: &[usize], depth: usize) -> TreeNode<S> {
        let counts = self.histogram(indices);
        let leaf = |counts: Vec<u64>| TreeNode::Leaf {
            class: argmax_lowest(&counts),
            distribution: counts,
        };
        let parent_gini = gini(&counts).expect("node is non-empty");
        let depth_capped = self.config.max_depth.is_some_and(|d| depth >= d);
        if parent_gini == 0.0 || depth_capped || indices.len() < self.config.min_samples_split {
            return leaf(counts);
        }

        let n_features = self.samples[0].len();
        let candidate_features: Vec<usize> = match self.features_per_split {
            Some(m) if m < n_features => {
                let mut sampled = sample_without_replacement(n_features, m, &mut self.rng);
                sampled.sort_unstable();
                sampled
            }
            _ => (0..n_features).collect(),
        };

        let mut split = self.best_split(indices, &counts, parent_gini, &candidate_features);
        if split.is_none() && candidate_features.len() < n_features {
            // The sampled features were all constant at this node; widen the
            // search so an impure node still splits when any feature can.
            let all: Vec<usize> = (0..n_features).collect();
            split = self.best_split(indices, &counts, parent_gini, &all);
        }
        let Some((feature, threshold)) = split else {
            return leaf(counts);
        };

        let (left, right): (Vec<usize>, Vec<usize>) = indices
            .iter()
            .partition(|&&i| self.samples[i][feature] <= threshold);
        debug_assert!(!left.is_empty() && !right.is_empty());
        TreeNode::Split {
            feature,
            threshold,
            left: Box::new(self.build(&left, depth + 1)),
            right: Box::new(self.build(&right, depth + 1)),
        }
    }

    /// Best Gini-gain split over the candidate features, scanning ascending
    /// thresholds so ties resolve to the lowest feature index and threshold.
    fn best_split(
        &self,
        indices: &[usize],
        parent_counts: &[u64],
        parent_gini: f64,
        features: &[usize],
    ) -> Option<(usize, S)> {
        let total = indices.len() as f64;
        let mut best: Option<(f64, usize, S)> = None;
        for &feature in features {
            let mut ordered: Vec<usize> = indices.to_vec();
            ordered.sort_by(|&a, &b| {
                self.samples[a][feature]
                    .partial_cmp(&self.samples[b][feature])
                    .expect("finite feature values")
            });
            let mut left_counts = vec![0u64; self.num_classes];
            let mut left_n = 0usize;
            for w in 0..ordered.len() - 1 {
                left_counts[self.labels[ordered[w]]] += 1;
                left_n += 1;
                let value = self.samples[ordered[w]][feature];
                let next = self.samples[ordered[w + 1]][feature];
                if value == next {
                    continue;
                }
                let threshold = (value + next) / S::from_f64_lossy(2.0);
                // Degenerate midpoints (adjacent representable values) would
                // send everything to one side.
                if threshold >= next || threshold < value {
                    continue;
                }
                let right_counts: Vec<u64> = parent_counts
                    .iter()
                    .zip(&left_counts)
                    .map(|(&p, &l)| p - l)
                    .collect();
                let left_gini = gini(&left_counts).expect("left side non-empty");
                let right_gini = gini(&right_counts).expect("right side non-empty");
                let weighted = (left_n as f64 * left_gini
                    + (ordered.len() - left_n) as f64 * right_gini)
                    / total;
                // Zero-gain splits are admitted on impure nodes (XOR-style
                // data needs one before any informative split exists); the
                // recursion still terminates because both sides are
                // non-empty.
                let gain = parent_gini - weighted;
                if best.as_ref().is_none_or(|(g, _, _)| gain > *g) {
                    best = Some((gain, feature, threshold));
                }
            }
        }
        best.map(|(_, feature, threshold)| (feature, threshold))
    }
}

fn sample_without_replacement(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..m {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(m);
    pool
}

fn validate<S: Scalar>(
    samples: &[Vec<S>],
    labels: &[usize],
    num_classes: usize,
) -> Result<(), TreeError> {
    if samples.is_empty() || labels.len() != samples.len() {
        return Err(TreeError::EmptyTrainingSet);
    }
    let width = samples[0].len();
    if samples.iter().any(|s| s.len() != width) {
        return Err(TreeError::InconsistentVectors);
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(TreeError::LabelOutOfRange(bad, num_classes));
    }
    Ok(())
}

/// Fit a single CART tree with greedy Gini splits over all features.
pub fn fit_tree<S: Scalar>(
    samples: &[Vec<S>],
    labels: &[usize],
    num_classes: usize,
    config: &TreeConfig,
    seed: u64,
) -> Result<TreeNode<S>, TreeError> {
    validate(samples, labels, num_classes)?;
    let mut builder = TreeBuilder {
        samples,
        labels,
        num_classes,
        config: config.clone(),
        features_per_split: None,
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let indices: Vec<usize> = (0..samples.len()).collect();
    Ok(builder.build(&indices, 0))
}

/// Fit a bagged forest: each tree trains on its own seeded bootstrap with a
/// random feature subset per split.
pub fn fit_forest<S: Scalar>(
    samples: &[Vec<S>],
    labels: &[usize],
    class_names: &[String],
    config: &ForestConfig,
) -> Result<ForestModel<S>, TreeError> {
    let num_classes = class_names.len();
    validate(samples, labels, num_classes)?;
    let n_features = samples[0].len();
    let features_per_split = match config.feature_fraction {
        Some(f) => ((f * n_features as f64).ceil() as usize).clamp(1, n_features),
        None => ((n_features as f64).sqrt().ceil() as usize).clamp(1, n_features),
    };
    let tree_config = TreeConfig {
        max_depth: config.max_depth,
        min_samples_split: config.min_samples_split,
    };

    let mut trees = Vec::with_capacity(config.n_trees);
    for t in 0..config.n_trees {
        let mut rng =
            ChaCha8Rng::seed_from_u64(crate::seed::stage_seed(config.seed, &format!("tree-{t}")));
        let indices: Vec<usize> = if config.bootstrap {
            (0..samples.len())
                .map(|_| rng.random_range(0..samples.len()))
                .collect()
        } else {
            (0..samples.len()).collect()
        };
        let mut builder = TreeBuilder {
            samples,
            labels,
            num_classes,
            config: tree_config.clone(),
            features_per_split: (features_per_split < n_features).then_some(features_per_split),
            rng,
        };
        trees.push(builder.build(&indices, 0));
    }
    Ok(ForestModel {
        trees,
        config: config.clone(),
        class_names: class_names.to_vec(),
        n_features,
    })
}

/// Majority vote over the forest's trees; ties resolve to the lowest class
/// index. Returns the winning class and the per-class vote counts.
pub fn predict_forest<S: Scalar>(
    model: &ForestModel<S>,
    x: &[S],
) -> Result<(usize, Vec<u64>), TreeError> {
    if x.len() != model.n_features {
        return Err(TreeError::LayoutMismatch {
            expected: model.n_features,
            got: x.len(),
        });
    }
    let mut votes = vec![0u64; model.class_names.len()];
    for tree in &model.trees {
        votes[tree.predict(x)] += 1;
    }
    Ok((argmax_lowest(&votes), votes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vecs(rows: &[&[f64]]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| r.to_vec()).collect()
    }

    #[test]
    fn gini_closed_forms() {
        assert_eq!(gini(&[7, 0]).unwrap(), 0.0);
        assert_eq!(gini(&[5, 5]).unwrap(), 0.5);
        assert!((gini(&[3, 1]).unwrap() - 0.375).abs() < 1e-15);
        assert!(matches!(gini(&[0, 0]), Err(TreeError::EmptyNode)));
    }

    #[test]
    fn linearly_separable_data_needs_one_split() {
        let samples = vecs(&[&[0.0], &[1.0], &[2.0], &[10.0], &[11.0], &[12.0]]);
        let labels = vec![0, 0, 0, 1, 1, 1];
        let tree = fit_tree(&samples, &labels, 2, &TreeConfig::default(), 0).unwrap();
        assert_eq!(tree.depth(), 1);
        for (x, &label) in samples.iter().zip(&labels) {
            assert_eq!(tree.predict(x), label);
        }
    }

    /// Enumerate every depth-1 split on the four XOR points: no single
    /// threshold on either coordinate beats 50% accuracy.
    fn xor_depth1_oracle() -> f64 {
        let points = [
            ([0.0, 0.0], 0usize),
            ([0.0, 1.0], 1),
            ([1.0, 0.0], 1),
            ([1.0, 1.0], 0),
        ];
        let mut best = 0.0f64;
        for feature in 0..2 {
            for threshold in [-0.5, 0.5, 1.5] {
                // Majority class on each side of the split.
                for (left_class, right_class) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let correct = points
                        .iter()
                        .filter(|(x, y)| {
                            let predicted = if x[feature] <= threshold {
                                left_class
                            } else {
                                right_class
                            };
                            predicted == *y
                        })
                        .count();
                    best = best.max(correct as f64 / 4.0);
                }
            }
        }
        best
    }

    #[test]
    fn xor_needs_depth_two() {
        assert_eq!(xor_depth1_oracle(), 0.5);

        let samples = vecs(&[&[0.0, 0.0], &[0.0, 1.0], &[1.0, 0.0], &[1.0, 1.0]]);
        let labels = vec![0, 1, 1, 0];

        let capped = fit_tree(
            &samples,
            &labels,
            2,
            &TreeConfig {
                max_depth: Some(1),
                ..TreeConfig::default()
            },
            0,
        )
        .unwrap();
        let capped_acc = samples
            .iter()
            .zip(&labels)
            .filter(|(x, &y)| capped.predict(x) == y)
            .count() as f64
            / 4.0;
        assert!(capped_acc <= 0.75);

        let full = fit_tree(&samples, &labels, 2, &TreeConfig::default(), 0).unwrap();
        assert!(full.depth() >= 2);
        for (x, &y) in samples.iter().zip(&labels) {
            assert_eq!(full.predict(x), y);
        }
    }

    #[test]
    fn pure_labels_become_a_single_leaf() {
        let samples = vecs(&[&[0.0], &[5.0], &[9.0]]);
        let tree = fit_tree(&samples, &[1, 1, 1], 2, &TreeConfig::default(), 0).unwrap();
        match tree {
            TreeNode::Leaf {
                class,
                distribution,
            } => {
                assert_eq!(class, 1);
                assert_eq!(distribution, vec![0, 3]);
            }
            _ => panic!("expected a leaf"),
        }
    }

    #[test]
    fn degenerate_forest_equals_a_single_tree() {
        let mut samples = Vec::new();
        let mut labels = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..60 {
            let x: f64 = rng.random_range(-4.0..4.0);
            let y: f64 = rng.random_range(-4.0..4.0);
            samples.push(vec![x, y]);
            labels.push(usize::from(x + y > 0.5));
        }
        let names = vec!["n".to_string(), "p".to_string()];
        let forest = fit_forest(
            &samples,
            &labels,
            &names,
            &ForestConfig {
                n_trees: 1,
                feature_fraction: Some(1.0),
                bootstrap: false,
                seed: 3,
                ..ForestConfig::default()
            },
        )
        .unwrap();
        let tree = fit_tree(&samples, &labels, 2, &TreeConfig::default(), 3).unwrap();
        for _ in 0..200 {
            let x = vec![rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
            let (forest_pred, votes) = predict_forest(&forest, &x).unwrap();
            assert_eq!(forest_pred, tree.predict(&x));
            assert_eq!(votes.iter().sum::<u64>(), 1);
        }
    }

    #[test]
    fn same_seed_reproduces_the_forest() {
        let samples = vecs(&[
            &[0.0, 1.0],
            &[1.0, 0.0],
            &[2.0, 2.0],
            &[3.0, 0.5],
            &[0.5, 3.0],
        ]);
        let labels = vec![0, 0, 1, 1, 0];
        let names = vec!["a".to_string(), "b".to_string()];
        let config = ForestConfig {
            n_trees: 7,
            seed: 11,
            ..ForestConfig::default()
        };
        let f1 = fit_forest(&samples, &labels, &names, &config).unwrap();
        let f2 = fit_forest(&samples, &labels, &names, &config).unwrap();
        assert_eq!(f1, f2);
    }

    #[test]
    fn forest_prediction_is_the_mode_of_tree_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let samples: Vec<Vec<f64>> = (0..80)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let labels: Vec<usize> = samples
            .iter()
            .map(|s: &Vec<f64>| usize::from(s[0] * s[1] > 0.0) + usize::from(s[2] > 0.3))
            .collect();
        let names: Vec<String> = (0..3).map(|i| format!("c{i}")).collect();
        let forest = fit_forest(
            &samples,
            &labels,
            &names,
            &ForestConfig {
                n_trees: 15,
                seed: 4,
                ..ForestConfig::default()
            },
        )
        .unwrap();
        for _ in 0..300 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
            let (predicted, votes) = predict_forest(&forest, &x).unwrap();
            let mut expected_votes = vec![0u64; 3];
            for tree in &forest.trees {
                expected_votes[tree.predict(&x)] += 1;
            }
            assert_eq!(votes, expected_votes);
            let mode = expected_votes
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .unwrap()
                .0;
            assert_eq!(predicted, mode);
        }
    }

    #[test]
    fn tie_votes_resolve_to_the_lowest_class() {
        let leaf = |class: usize| TreeNode::Leaf {
            class,
            distribution: vec![0, 0, 0],
        };
        let model = ForestModel {
            trees: vec![leaf(2), leaf(1), leaf(1), leaf(2)],
            config: ForestConfig::default(),
            class_names: vec!["a".into(), "b".into(), "c".into()],
            n_features: 1,
        };
        let (predicted, votes) = predict_forest(&model, &[0.0f64]).unwrap();
        assert_eq!(votes, vec![0, 2, 2]);
        assert_eq!(predicted, 1);
    }

    #[test]
    fn monotone_feature_transform_preserves_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let samples: Vec<Vec<f64>> = (0..50)
            .map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
            .collect();
        let labels: Vec<usize> = samples
            .iter()
            .map(|s| usize::from(s[0] > 0.2) + usize::from(s[1] < -0.4))
            .collect();
        let transform = |x: f64| x * x * x + 2.0 * x;
        let transformed: Vec<Vec<f64>> = samples
            .iter()
            .map(|s| vec![transform(s[0]), s[1]])
            .collect();
        let tree = fit_tree(&samples, &labels, 3, &TreeConfig::default(), 0).unwrap();
        let tree_t = fit_tree(&transformed, &labels, 3, &TreeConfig::default(), 0).unwrap();
        for _ in 0..200 {
            let x = vec![rng.random_range(-2.5..2.5), rng.random_range(-2.5..2.5)];
            let x_t = vec![transform(x[0]), x[1]];
            assert_eq!(tree.predict(&x), tree_t.predict(&x_t));
        }
    }

    #[test]
    fn distinct_vectors_train_to_full_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let samples: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                vec![
                    i as f64 + rng.random_range(0.0..0.4),
                    rng.random_range(-1.0..1.0),
                ]
            })
            .collect();
        let labels: Vec<usize> = (0..40).map(|_| rng.random_range(0..4)).collect();
        let tree = fit_tree(&samples, &labels, 4, &TreeConfig::default(), 0).unwrap();
        for (x, &y) in samples.iter().zip(&labels) {
            assert_eq!(tree.predict(x), y);
        }
    }

    #[test]
    fn layout_mismatch_is_reported() {
        let samples = vecs(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let forest = fit_forest(
            &samples,
            &[0, 1],
            &["a".to_string(), "b".to_string()],
            &ForestConfig {
                n_trees: 2,
                ..ForestConfig::default()
            },
        )
        .unwrap();
        assert!(matches!(
            predict_forest(&forest, &[1.0]),
            Err(TreeError::LayoutMismatch {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn inconsistent_vectors_are_rejected() {
        let samples = vec![vec![0.0, 1.0], vec![1.0]];
        assert!(matches!(
            fit_tree(&samples, &[0, 1], 2, &TreeConfig::default(), 0),
            Err(TreeError::InconsistentVectors)
        ));
    }

    #[test]
    fn decision_path_traces_the_splits() {
        let samples = vecs(&[&[0.0], &[1.0], &[10.0], &[11.0]]);
        let labels = vec![0, 0, 1, 1];
        let tree = fit_tree(&samples, &labels, 2, &TreeConfig::default(), 0).unwrap();
        let path = tree.decision_path(&[12.0]);
        assert_eq!(path.len(), 2);
        match &path[0] {
            PathStep::Split { went_left, .. } => assert!(!went_left),
            _ => panic!("expected a split step"),
        }
        match &path[1] {
            PathStep::Leaf { class, .. } => assert_eq!(*class, 1),
            _ => panic!("expected a leaf step"),
        }
    }
}
