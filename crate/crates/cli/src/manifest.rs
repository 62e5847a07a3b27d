//! Dataset manifest, sample matrix, and model container files.
//!
//! `prepare` writes a JSON manifest describing the encoding plus a CSV
//! sample matrix; the other subcommands consume both. Model files are
//! versioned JSON containers tagged by kind; each records the hash of the
//! manifest it was trained against, and loading verifies it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use procast_core::features::{
    tree_layout, AttributeEncoder, EncodedDataset, PrefixSample, SplitDataset, Window,
};
use procast_core::seed::fnv1a64;
use procast_core::transformer::Checkpoint;
use procast_core::trees::{ForestModel, TreeConfig, TreeNode};

use crate::stages::{Stage, StageError};

pub const MANIFEST_VERSION: u32 = 1;
pub const MODEL_FILE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub source: String,
    pub window: Window,
    pub max_len: usize,
    pub class_names: Vec<String>,
    pub encoders: Vec<AttributeEncoder>,
    pub scalar_features: Vec<String>,
    /// Column names of the flattened tree featurization.
    pub tree_layout: Vec<String>,
    pub samples_file: String,
    pub seed: u64,
    pub test_fraction: f64,
    pub validation_fraction: f64,
    pub undersampled: bool,
    pub counts: SplitCounts,
}

impl DatasetManifest {
    pub fn new(
        source: &str,
        split: &SplitDataset,
        seed: u64,
        test_fraction: f64,
        validation_fraction: f64,
        undersampled: bool,
    ) -> Self {
        let dataset = &split.train;
        Self {
            version: MANIFEST_VERSION,
            source: source.to_string(),
            window: dataset.window,
            max_len: dataset.max_len,
            class_names: dataset.class_names.clone(),
            encoders: dataset.encoders.clone(),
            scalar_features: vec!["prefix_len".to_string()],
            tree_layout: tree_layout(&dataset.encoders, dataset.max_len),
            samples_file: "samples.csv".to_string(),
            seed,
            test_fraction,
            validation_fraction,
            undersampled,
            counts: SplitCounts {
                train: split.train.samples.len(),
                validation: split.validation.samples.len(),
                test: split.test.samples.len(),
            },
        }
    }

    fn dataset_template(&self) -> EncodedDataset {
        EncodedDataset {
            samples: Vec::new(),
            encoders: self.encoders.clone(),
            window: self.window,
            max_len: self.max_len,
            class_names: self.class_names.clone(),
        }
    }
}

fn io_error(stage: Stage, path: &Path, e: impl std::fmt::Display) -> StageError {
    StageError {
        stage,
        message: format!("{}: {e}", path.display()),
    }
}

/// Write manifest and samples; returns the manifest hash (over the manifest
/// file bytes as written).
pub fn write_dataset(
    dir: &Path,
    manifest: &DatasetManifest,
    split: &SplitDataset,
) -> Result<u64, StageError> {
    fs::create_dir_all(dir).map_err(|e| io_error(Stage::Prepare, dir, e))?;
    let manifest_path = dir.join("manifest.json");
    let manifest_bytes = serde_json::to_vec_pretty(manifest)
        .map_err(|e| io_error(Stage::Prepare, &manifest_path, e))?;
    fs::write(&manifest_path, &manifest_bytes)
        .map_err(|e| io_error(Stage::Prepare, &manifest_path, e))?;

    let samples_path = dir.join(&manifest.samples_file);
    let mut writer = csv::Writer::from_path(&samples_path)
        .map_err(|e| io_error(Stage::Prepare, &samples_path, e))?;
    let mut header = vec![
        "case_id".to_string(),
        "part".to_string(),
        "position".to_string(),
        "prefix_len".to_string(),
        "label".to_string(),
    ];
    for enc in &manifest.encoders {
        for slot in 0..manifest.max_len {
            header.push(format!("{}__{}", enc.attribute, slot));
        }
    }
    writer
        .write_record(&header)
        .map_err(|e| io_error(Stage::Prepare, &samples_path, e))?;
    for (part, dataset) in [
        ("train", &split.train),
        ("validation", &split.validation),
        ("test", &split.test),
    ] {
        for sample in &dataset.samples {
            let mut record = vec![
                sample.case_id.clone(),
                part.to_string(),
                sample.position.to_string(),
                sample.prefix_len.to_string(),
                sample.label.to_string(),
            ];
            let mut cat_iter = sample.categorical.iter();
            let mut num_iter = sample.numeric.iter();
            for enc in &manifest.encoders {
                if enc.is_categorical() {
                    let seq = cat_iter.next().expect("categorical sequence present");
                    record.extend(seq.iter().map(|i| i.to_string()));
                } else {
                    let seq = num_iter.next().expect("numeric sequence present");
                    record.extend(seq.iter().map(|x| x.to_string()));
                }
            }
            writer
                .write_record(&record)
                .map_err(|e| io_error(Stage::Prepare, &samples_path, e))?;
        }
    }
    writer
        .flush()
        .map_err(|e| io_error(Stage::Prepare, &samples_path, e))?;
    Ok(fnv1a64(&manifest_bytes))
}

/// Hash of the stored manifest file.
pub fn manifest_hash(dir: &Path) -> Result<u64, StageError> {
    let path = dir.join("manifest.json");
    let bytes = fs::read(&path).map_err(|e| io_error(Stage::Prepare, &path, e))?;
    Ok(fnv1a64(&bytes))
}

/// Load manifest plus samples back into a split dataset.
pub fn read_dataset(dir: &Path) -> Result<(DatasetManifest, SplitDataset, u64), StageError> {
    let manifest_path = dir.join("manifest.json");
    let bytes =
        fs::read(&manifest_path).map_err(|e| io_error(Stage::Prepare, &manifest_path, e))?;
    let manifest: DatasetManifest =
        serde_json::from_slice(&bytes).map_err(|e| io_error(Stage::Prepare, &manifest_path, e))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(StageError {
            stage: Stage::Prepare,
            message: format!(
                "manifest version {} unsupported (expected {MANIFEST_VERSION})",
                manifest.version
            ),
        });
    }
    let hash = fnv1a64(&bytes);

    let samples_path = dir.join(&manifest.samples_file);
    let mut reader = csv::Reader::from_path(&samples_path)
        .map_err(|e| io_error(Stage::Prepare, &samples_path, e))?;
    let mut train = Vec::new();
    let mut validation = Vec::new();
    let mut test = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| io_error(Stage::Prepare, &samples_path, e))?;
        let field = |i: usize| record.get(i).unwrap_or("").to_string();
        let parse_err = |what: &str| StageError {
            stage: Stage::Prepare,
            message: format!(
                "{}: row {}: bad {what}",
                samples_path.display(),
                row_idx + 1
            ),
        };
        let position: usize = field(2).parse().map_err(|_| parse_err("position"))?;
        let prefix_len: usize = field(3).parse().map_err(|_| parse_err("prefix_len"))?;
        let label: usize = field(4).parse().map_err(|_| parse_err("label"))?;
        let mut cursor = 5usize;
        let mut categorical = Vec::new();
        let mut numeric = Vec::new();
        for enc in &manifest.encoders {
            if enc.is_categorical() {
                let mut seq = Vec::with_capacity(manifest.max_len);
                for _ in 0..manifest.max_len {
                    seq.push(
                        field(cursor)
                            .parse::<usize>()
                            .map_err(|_| parse_err("index"))?,
                    );
                    cursor += 1;
                }
                categorical.push(seq);
            } else {
                let mut seq = Vec::with_capacity(manifest.max_len);
                for _ in 0..manifest.max_len {
                    seq.push(
                        field(cursor)
                            .parse::<f64>()
                            .map_err(|_| parse_err("value"))?,
                    );
                    cursor += 1;
                }
                numeric.push(seq);
            }
        }
        let mut mask = vec![false; manifest.max_len];
        if prefix_len > manifest.max_len {
            return Err(parse_err("prefix_len"));
        }
        mask[manifest.max_len - prefix_len..]
            .iter_mut()
            .for_each(|m| *m = true);
        let sample = PrefixSample {
            case_id: field(0),
            categorical,
            numeric,
            mask,
            label,
            prefix_len,
            position,
        };
        match field(1).as_str() {
            "train" => train.push(sample),
            "validation" => validation.push(sample),
            "test" => test.push(sample),
            other => {
                return Err(StageError {
                    stage: Stage::Prepare,
                    message: format!("unknown split part {other:?} in samples file"),
                })
            }
        }
    }

    let template = manifest.dataset_template();
    let split = SplitDataset {
        train: template.with_samples(train),
        validation: template.with_samples(validation),
        test: template.with_samples(test),
        seed: manifest.seed,
    };
    Ok((manifest, split, hash))
}

/// Versioned, kind-tagged model container. `seed` is the root seed the
/// training run derived its stage seeds from.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelFile {
    Transformer {
        seed: u64,
        checkpoint: Checkpoint,
    },
    DecisionTree {
        version: u32,
        manifest_hash: u64,
        seed: u64,
        class_names: Vec<String>,
        feature_names: Vec<String>,
        config: TreeConfig,
        root: TreeNode<f64>,
    },
    RandomForest {
        version: u32,
        manifest_hash: u64,
        seed: u64,
        class_names: Vec<String>,
        feature_names: Vec<String>,
        model: ForestModel<f64>,
    },
}

impl ModelFile {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelFile::Transformer { .. } => "transformer",
            ModelFile::DecisionTree { .. } => "decision-tree",
            ModelFile::RandomForest { .. } => "random-forest",
        }
    }

    pub fn manifest_hash(&self) -> u64 {
        match self {
            ModelFile::Transformer { checkpoint, .. } => checkpoint.manifest_hash,
            ModelFile::DecisionTree { manifest_hash, .. } => *manifest_hash,
            ModelFile::RandomForest { manifest_hash, .. } => *manifest_hash,
        }
    }
}

pub fn write_model(path: &Path, model: &ModelFile) -> Result<(), StageError> {
    let json = serde_json::to_vec_pretty(model).map_err(|e| io_error(Stage::Train, path, e))?;
    fs::write(path, json).map_err(|e| io_error(Stage::Train, path, e))
}

pub fn read_model(path: &Path) -> Result<ModelFile, StageError> {
    let bytes = fs::read(path).map_err(|e| io_error(Stage::Evaluate, path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| io_error(Stage::Evaluate, path, e))
}

pub fn model_path(dir: &Path, explicit: Option<PathBuf>) -> PathBuf {
    explicit.unwrap_or_else(|| dir.join("model.json"))
}
