//! Feature encoding and prefix-sample construction.
//!
//! Events become per-attribute sequences: categorical attributes are mapped
//! to vocabulary indices (0 reserved for padding, 1 for unknown tokens),
//! numeric attributes are standardized with statistics fitted on training
//! cases only. Each trace of length L yields L-1 prefix samples whose label
//! is the following activity. Prefixes are right-aligned inside the padded
//! window so the most recent event always sits in the last slot.
//!
//! Timestamps feed the models through two derived numeric attributes:
//! seconds since the previous event and seconds since the case started.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eventlog::{AttributeValue, EventLog, Trace};

/// Reserved padding index.
pub const PAD_INDEX: usize = 0;
/// Reserved out-of-vocabulary index.
pub const UNK_INDEX: usize = 1;

/// Derived numeric attribute: seconds since the previous event in the trace.
pub const TIME_DELTA_ATTR: &str = "time_delta";
/// Derived numeric attribute: seconds since the first event of the trace.
pub const TIME_SINCE_START_ATTR: &str = "time_since_start";

/// Fraction of training-pool cases held out for validation.
pub const VALIDATION_FRACTION: f64 = 0.2;

/// Windowing mode for prefix construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Window {
    /// Full history: the prefix contains every event seen so far.
    Dynamic,
    /// Only the last `k` events.
    Fixed { k: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EncoderKind {
    Categorical {
        /// Index order; `vocab[0]` is the padding token, `vocab[1]` unknown.
        vocab: Vec<String>,
    },
    Numeric {
        mean: f64,
        std: f64,
        /// True when the column had no variance on the training cases; std
        /// was forced to 1.
        zero_variance: bool,
    },
}

/// Fitted encoder for one attribute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeEncoder {
    pub attribute: String,
    #[serde(flatten)]
    pub kind: EncoderKind,
}

impl AttributeEncoder {
    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, EncoderKind::Categorical { .. })
    }

    /// Vocabulary size including the reserved slots.
    pub fn vocab_size(&self) -> usize {
        match &self.kind {
            EncoderKind::Categorical { vocab } => vocab.len(),
            EncoderKind::Numeric { .. } => 0,
        }
    }

    /// Encode a token; unknown tokens map to [`UNK_INDEX`].
    pub fn encode_token(&self, token: &str) -> usize {
        match &self.kind {
            EncoderKind::Categorical { vocab } => vocab
                .iter()
                .position(|t| t == token)
                .filter(|&i| i >= 2)
                .unwrap_or(UNK_INDEX),
            EncoderKind::Numeric { .. } => UNK_INDEX,
        }
    }

    /// Token for an index, if this encoder is categorical.
    pub fn token(&self, index: usize) -> Option<&str> {
        match &self.kind {
            EncoderKind::Categorical { vocab } => vocab.get(index).map(String::as_str),
            EncoderKind::Numeric { .. } => None,
        }
    }

    pub fn standardize(&self, x: f64) -> f64 {
        match &self.kind {
            EncoderKind::Numeric { mean, std, .. } => (x - mean) / std,
            EncoderKind::Categorical { .. } => x,
        }
    }
}

/// One prediction instance: an encoded prefix and its next-activity label.
///
/// `categorical[i]` aligns with the i-th categorical encoder of the dataset,
/// `numeric[j]` with the j-th numeric encoder. All sequences have the window
/// capacity as length and are right-aligned (padding at the front).
#[derive(Clone, Debug, PartialEq)]
pub struct PrefixSample {
    pub case_id: String,
    pub categorical: Vec<Vec<usize>>,
    pub numeric: Vec<Vec<f64>>,
    pub mask: Vec<bool>,
    pub label: usize,
    pub prefix_len: usize,
    /// Prefix end position inside the trace (1-based event count consumed).
    pub position: usize,
}

/// Encoded samples plus everything needed to reproduce the encoding.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedDataset {
    pub samples: Vec<PrefixSample>,
    pub encoders: Vec<AttributeEncoder>,
    pub window: Window,
    pub max_len: usize,
    /// Activity vocabulary; label indices point into this list.
    pub class_names: Vec<String>,
}

impl EncodedDataset {
    pub fn categorical_encoders(&self) -> impl Iterator<Item = &AttributeEncoder> {
        self.encoders.iter().filter(|e| e.is_categorical())
    }

    pub fn numeric_encoders(&self) -> impl Iterator<Item = &AttributeEncoder> {
        self.encoders.iter().filter(|e| !e.is_categorical())
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Label histogram over sample labels.
    pub fn label_counts(&self) -> BTreeMap<usize, usize> {
        let mut counts = BTreeMap::new();
        for sample in &self.samples {
            *counts.entry(sample.label).or_insert(0) += 1;
        }
        counts
    }

    /// Same metadata, different samples.
    pub fn with_samples(&self, samples: Vec<PrefixSample>) -> Self {
        Self {
            samples,
            encoders: self.encoders.clone(),
            window: self.window,
            max_len: self.max_len,
            class_names: self.class_names.clone(),
        }
    }
}

/// Case-atomic partition of an encoded dataset.
#[derive(Clone, Debug)]
pub struct SplitDataset {
    pub train: EncodedDataset,
    pub validation: EncodedDataset,
    pub test: EncodedDataset,
    pub seed: u64,
}

/// Case ids per part, decided before any encoder is fitted.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseSplit {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl CaseSplit {
    /// Training pool: everything the trainer may touch (train + validation).
    pub fn train_pool(&self) -> BTreeSet<String> {
        self.train
            .iter()
            .chain(self.validation.iter())
            .cloned()
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("unknown attribute: {0}")]
    UnknownAttribute(String),
    #[error("need at least 5 cases to split, found {0}")]
    TooFewCases(usize),
    #[error("undersampling needs at least two label classes")]
    SingleClass,
    #[error("fixed window size must be >= 1")]
    InvalidWindow,
    #[error("fraction {0} outside (0, 1)")]
    InvalidFraction(f64),
}

/// Default attribute selection: the activity, any resource-like categorical
/// column, and the two derived time features.
pub fn default_attribute_selection(log: &EventLog) -> Vec<String> {
    let mut attrs = vec!["activity".to_string()];
    for (name, kind) in &log.schema.extra_columns {
        if *kind == crate::eventlog::AttrKind::Categorical
            && name.to_lowercase().contains("resource")
        {
            attrs.push(name.clone());
        }
    }
    attrs.push(TIME_DELTA_ATTR.to_string());
    attrs.push(TIME_SINCE_START_ATTR.to_string());
    attrs
}

/// Split case ids by seed: `test_fraction` of cases to test, then
/// `validation_fraction` of the remaining pool to validation.
pub fn choose_case_split(
    case_ids: &[String],
    test_fraction: f64,
    validation_fraction: f64,
    seed: u64,
) -> Result<CaseSplit, FeatureError> {
    if !(0.0..1.0).contains(&test_fraction) || test_fraction <= 0.0 {
        return Err(FeatureError::InvalidFraction(test_fraction));
    }
    if !(0.0..1.0).contains(&validation_fraction) {
        return Err(FeatureError::InvalidFraction(validation_fraction));
    }
    let mut ids: Vec<String> = case_ids.to_vec();
    ids.sort();
    ids.dedup();
    if ids.len() < 5 {
        return Err(FeatureError::TooFewCases(ids.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n_test = ((ids.len() as f64 * test_fraction).round() as usize).max(1);
    let test: Vec<String> = ids[..n_test].to_vec();
    let pool = &ids[n_test..];
    let n_val = (pool.len() as f64 * validation_fraction).round() as usize;
    let validation: Vec<String> = pool[..n_val].to_vec();
    let train: Vec<String> = pool[n_val..].to_vec();
    Ok(CaseSplit {
        train,
        validation,
        test,
    })
}

/// Fit encoders on training cases only. `activity` is always included (and
/// forced to the front); tokens seen outside the training cases encode to
/// the unknown index.
pub fn fit_encoders(
    log: &EventLog,
    selected_attributes: &[String],
    train_cases: &BTreeSet<String>,
) -> Result<Vec<AttributeEncoder>, FeatureError> {
    let mut names: Vec<String> = vec!["activity".to_string()];
    for name in selected_attributes {
        if name != "activity" && !names.contains(name) {
            names.push(name.clone());
        }
    }

    let train_traces: Vec<&Trace> = log
        .traces
        .iter()
        .filter(|t| train_cases.contains(&t.case_id))
        .collect();

    let mut encoders = Vec::with_capacity(names.len());
    for name in &names {
        let encoder = if name == "activity" {
            let tokens: BTreeSet<String> = train_traces
                .iter()
                .flat_map(|t| t.activities().map(str::to_owned))
                .collect();
            categorical_encoder(name, tokens)
        } else if name == TIME_DELTA_ATTR || name == TIME_SINCE_START_ATTR {
            let mut values = Vec::new();
            for trace in &train_traces {
                values.extend(derived_time_values(trace, name));
            }
            numeric_encoder(name, &values)
        } else {
            let (_, kind) = log
                .schema
                .extra_columns
                .iter()
                .find(|(col, _)| col == name)
                .ok_or_else(|| FeatureError::UnknownAttribute(name.clone()))?;
            match kind {
                crate::eventlog::AttrKind::Categorical => {
                    let tokens: BTreeSet<String> = train_traces
                        .iter()
                        .flat_map(|t| t.events.iter())
                        .filter_map(|e| e.extras.get(name).map(AttributeValue::render))
                        .collect();
                    categorical_encoder(name, tokens)
                }
                _ => {
                    let values: Vec<f64> = train_traces
                        .iter()
                        .flat_map(|t| t.events.iter())
                        .filter_map(|e| e.extras.get(name).and_then(numeric_value))
                        .collect();
                    numeric_encoder(name, &values)
                }
            }
        };
        encoders.push(encoder);
    }
    Ok(encoders)
}

fn categorical_encoder(name: &str, tokens: BTreeSet<String>) -> AttributeEncoder {
    let mut vocab = vec!["<pad>".to_string(), "<unk>".to_string()];
    vocab.extend(tokens);
    AttributeEncoder {
        attribute: name.to_string(),
        kind: EncoderKind::Categorical { vocab },
    }
}

fn numeric_encoder(name: &str, values: &[f64]) -> AttributeEncoder {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let zero_variance = std < 1e-12;
    AttributeEncoder {
        attribute: name.to_string(),
        kind: EncoderKind::Numeric {
            mean,
            std: if zero_variance { 1.0 } else { std },
            zero_variance,
        },
    }
}

fn numeric_value(value: &AttributeValue) -> Option<f64> {
    match value {
        AttributeValue::Numeric(x) => Some(*x),
        AttributeValue::Timestamp(t) => Some(t.timestamp_millis() as f64 / 1000.0),
        AttributeValue::Categorical(_) => None,
    }
}

/// Raw (pre-standardization) values of a derived time attribute for every
/// event of a trace.
fn derived_time_values(trace: &Trace, name: &str) -> Vec<f64> {
    let start = trace.events[0].timestamp;
    trace
        .events
        .iter()
        .enumerate()
        .map(|(i, e)| match name {
            TIME_DELTA_ATTR => {
                if i == 0 {
                    0.0
                } else {
                    (e.timestamp - trace.events[i - 1].timestamp).num_milliseconds() as f64 / 1000.0
                }
            }
            _ => (e.timestamp - start).num_milliseconds() as f64 / 1000.0,
        })
        .collect()
}

/// Generate one sample per (trace, position): the prefix of events up to the
/// position and the following activity as label. Traces shorter than two
/// events yield nothing.
pub fn generate_prefix_samples(
    log: &EventLog,
    encoders: &[AttributeEncoder],
    window: Window,
) -> Result<EncodedDataset, FeatureError> {
    let max_len = match window {
        Window::Dynamic => log.max_trace_len().saturating_sub(1),
        Window::Fixed { k } => {
            if k == 0 {
                return Err(FeatureError::InvalidWindow);
            }
            k
        }
    };
    let activity_encoder = encoders
        .iter()
        .find(|e| e.attribute == "activity")
        .ok_or_else(|| FeatureError::UnknownAttribute("activity".to_string()))?;
    let class_names = match &activity_encoder.kind {
        EncoderKind::Categorical { vocab } => vocab.clone(),
        EncoderKind::Numeric { .. } => unreachable!("activity encoder is categorical"),
    };

    let cat_encoders: Vec<&AttributeEncoder> =
        encoders.iter().filter(|e| e.is_categorical()).collect();
    let num_encoders: Vec<&AttributeEncoder> =
        encoders.iter().filter(|e| !e.is_categorical()).collect();

    let mut samples = Vec::new();
    for trace in &log.traces {
        let length = trace.len();
        if length < 2 {
            continue;
        }
        // Per-event encoded values for the whole trace, computed once.
        let cat_values: Vec<Vec<usize>> = cat_encoders
            .iter()
            .map(|enc| {
                trace
                    .events
                    .iter()
                    .map(|e| {
                        if enc.attribute == "activity" {
                            enc.encode_token(&e.activity)
                        } else {
                            e.extras
                                .get(&enc.attribute)
                                .map(|v| enc.encode_token(&v.render()))
                                .unwrap_or(UNK_INDEX)
                        }
                    })
                    .collect()
            })
            .collect();
        let num_values: Vec<Vec<f64>> = num_encoders
            .iter()
            .map(|enc| {
                if enc.attribute == TIME_DELTA_ATTR || enc.attribute == TIME_SINCE_START_ATTR {
                    derived_time_values(trace, &enc.attribute)
                        .into_iter()
                        .map(|x| enc.standardize(x))
                        .collect()
                } else {
                    trace
                        .events
                        .iter()
                        .map(|e| {
                            e.extras
                                .get(&enc.attribute)
                                .and_then(numeric_value)
                                .map(|x| enc.standardize(x))
                                .unwrap_or(0.0)
                        })
                        .collect()
                }
            })
            .collect();

        for position in 1..length {
            let window_start = match window {
                Window::Dynamic => 0,
                Window::Fixed { k } => position.saturating_sub(k),
            };
            let w = position - window_start;
            let pad = max_len - w;
            let categorical: Vec<Vec<usize>> = cat_values
                .iter()
                .map(|values| {
                    let mut seq = vec![PAD_INDEX; max_len];
                    seq[pad..].copy_from_slice(&values[window_start..position]);
                    seq
                })
                .collect();
            let numeric: Vec<Vec<f64>> = num_values
                .iter()
                .map(|values| {
                    let mut seq = vec![0.0; max_len];
                    seq[pad..].copy_from_slice(&values[window_start..position]);
                    seq
                })
                .collect();
            let mut mask = vec![false; max_len];
            mask[pad..].iter_mut().for_each(|m| *m = true);
            samples.push(PrefixSample {
                case_id: trace.case_id.clone(),
                categorical,
                numeric,
                mask,
                label: activity_encoder.encode_token(&trace.events[position].activity),
                prefix_len: w,
                position,
            });
        }
    }
    samples.sort_by(|a, b| a.case_id.cmp(&b.case_id).then(a.position.cmp(&b.position)));

    Ok(EncodedDataset {
        samples,
        encoders: encoders.to_vec(),
        window,
        max_len,
        class_names,
    })
}

/// Partition samples case-atomically: `test_fraction` of the cases to test,
/// then [`VALIDATION_FRACTION`] of the remaining pool to validation.
pub fn split_by_case(
    dataset: &EncodedDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<SplitDataset, FeatureError> {
    split_by_case_with(dataset, test_fraction, VALIDATION_FRACTION, seed)
}

/// As [`split_by_case`] with an explicit validation fraction.
pub fn split_by_case_with(
    dataset: &EncodedDataset,
    test_fraction: f64,
    validation_fraction: f64,
    seed: u64,
) -> Result<SplitDataset, FeatureError> {
    let case_ids: Vec<String> = dataset.samples.iter().map(|s| s.case_id.clone()).collect();
    let split = choose_case_split(&case_ids, test_fraction, validation_fraction, seed)?;
    Ok(partition_by_case(dataset, &split, seed))
}

/// Partition samples according to an existing case split.
pub fn partition_by_case(dataset: &EncodedDataset, split: &CaseSplit, seed: u64) -> SplitDataset {
    let train_set: BTreeSet<&str> = split.train.iter().map(String::as_str).collect();
    let val_set: BTreeSet<&str> = split.validation.iter().map(String::as_str).collect();
    let mut train = Vec::new();
    let mut validation = Vec::new();
    let mut test = Vec::new();
    for sample in &dataset.samples {
        if train_set.contains(sample.case_id.as_str()) {
            train.push(sample.clone());
        } else if val_set.contains(sample.case_id.as_str()) {
            validation.push(sample.clone());
        } else {
            test.push(sample.clone());
        }
    }
    SplitDataset {
        train: dataset.with_samples(train),
        validation: dataset.with_samples(validation),
        test: dataset.with_samples(test),
        seed,
    }
}

/// Balance classes by keeping, for every label, a uniform random subset the
/// size of the minority class.
pub fn undersample(dataset: &EncodedDataset, seed: u64) -> Result<EncodedDataset, FeatureError> {
    let mut by_label: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, sample) in dataset.samples.iter().enumerate() {
        by_label.entry(sample.label).or_default().push(i);
    }
    if by_label.len() < 2 {
        return Err(FeatureError::SingleClass);
    }
    let minority = by_label.values().map(Vec::len).min().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    for indices in by_label.values() {
        if indices.len() == minority {
            keep.extend_from_slice(indices);
        } else {
            let mut shuffled = indices.clone();
            shuffled.shuffle(&mut rng);
            keep.extend_from_slice(&shuffled[..minority]);
        }
    }
    keep.sort_unstable();
    let samples = keep
        .into_iter()
        .map(|i| dataset.samples[i].clone())
        .collect();
    Ok(dataset.with_samples(samples))
}

/// Tabular layout for the tree baselines: every categorical index sequence
/// as reals, every numeric sequence, then the prefix length.
pub fn flatten_for_trees(sample: &PrefixSample) -> Vec<f64> {
    let mut out = Vec::with_capacity(
        sample.categorical.len() * sample.mask.len() + sample.numeric.len() * sample.mask.len() + 1,
    );
    for seq in &sample.categorical {
        out.extend(seq.iter().map(|&i| i as f64));
    }
    for seq in &sample.numeric {
        out.extend_from_slice(seq);
    }
    out.push(sample.prefix_len as f64);
    out
}

/// Column names matching [`flatten_for_trees`].
pub fn tree_layout(encoders: &[AttributeEncoder], max_len: usize) -> Vec<String> {
    let mut names = Vec::new();
    for enc in encoders.iter().filter(|e| e.is_categorical()) {
        for slot in 0..max_len {
            names.push(format!("{}[{}]", enc.attribute, slot));
        }
    }
    for enc in encoders.iter().filter(|e| !e.is_categorical()) {
        for slot in 0..max_len {
            names.push(format!("{}[{}]", enc.attribute, slot));
        }
    }
    names.push("prefix_len".to_string());
    names
}
