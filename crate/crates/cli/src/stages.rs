//! Pipeline stages shared by the subcommands.
//!
//! Each stage reports failures with a stage tag that maps to a process exit
//! code, so scripted callers can tell where a pipeline run stopped.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use procast_core::entropy::{
    count_transitions, process_entropy_with, BandThresholds, EntropyReport, LogBase,
};
use procast_core::eventlog::{
    log_stats, parse_csv, parse_xes, ColumnMapping, EventLog, LogStats, TypeHint, XesOptions,
};
use procast_core::features::{
    choose_case_split, default_attribute_selection, fit_encoders, flatten_for_trees,
    generate_prefix_samples, partition_by_case, undersample, EncodedDataset, SplitDataset, Window,
};
use procast_core::router::{route, ModelFamily, RoutingDecision, RoutingPolicy};
use procast_core::seed::stage_seed;
use procast_core::transformer::{
    load_checkpoint, predict_batch, save_checkpoint, train, Profile, TrainConfig, TransformerConfig,
};
use procast_core::trees::{fit_forest, fit_tree, predict_forest, ForestConfig, TreeConfig};

use crate::manifest::{
    manifest_hash, read_dataset, read_model, write_dataset, write_model, DatasetManifest,
    ModelFile, MODEL_FILE_VERSION,
};

/// Pipeline stage, mapped to an exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Parse,
    Prepare,
    Train,
    Evaluate,
    Config,
}

impl Stage {
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Parse => 10,
            Stage::Prepare => 20,
            Stage::Train => 30,
            Stage::Evaluate => 40,
            Stage::Config => 50,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Parse => "parse",
            Stage::Prepare => "prepare",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Config => "config",
        }
    }
}

#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub message: String,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} stage: {}", self.stage.name(), self.message)
    }
}

impl std::error::Error for StageError {}

pub fn stage_err(stage: Stage, e: impl std::fmt::Display) -> StageError {
    StageError {
        stage,
        message: e.to_string(),
    }
}

/// Resolved input options: path, format, and CSV mapping.
#[derive(Clone, Debug)]
pub struct InputSpec {
    pub path: PathBuf,
    /// `csv` or `xes`; inferred from the extension when absent.
    pub format: Option<String>,
    pub mapping: ColumnMapping,
    pub xes: XesOptions,
}

impl InputSpec {
    fn resolved_format(&self) -> Result<&str, StageError> {
        if let Some(f) = &self.format {
            return Ok(f.as_str());
        }
        let name = self.path.to_string_lossy().to_lowercase();
        if name.ends_with(".csv") {
            Ok("csv")
        } else if name.ends_with(".xes") || name.ends_with(".xes.gz") || name.ends_with(".xml") {
            Ok("xes")
        } else {
            Err(StageError {
                stage: Stage::Config,
                message: format!(
                    "cannot infer the format of {}; pass --format csv|xes",
                    self.path.display()
                ),
            })
        }
    }
}

/// Parse `col:kind,col:kind` type hints.
pub fn parse_type_hints(spec: &str) -> Result<BTreeMap<String, TypeHint>, StageError> {
    let mut hints = BTreeMap::new();
    for part in spec.split(',').filter(|p| !p.trim().is_empty()) {
        let (col, kind) = part.split_once(':').ok_or_else(|| StageError {
            stage: Stage::Config,
            message: format!("type hint {part:?} is not of the form column:kind"),
        })?;
        let hint = match kind.trim() {
            "categorical" => TypeHint::Categorical,
            "numeric" => TypeHint::Numeric,
            "timestamp" => TypeHint::Timestamp,
            other => {
                return Err(StageError {
                    stage: Stage::Config,
                    message: format!("unknown type hint kind {other:?}"),
                })
            }
        };
        hints.insert(col.trim().to_string(), hint);
    }
    Ok(hints)
}

/// Parse a window spec: `dynamic`, `fixed:K`, or `fixed` (K = 5).
pub fn parse_window(spec: &str) -> Result<Window, StageError> {
    if spec == "dynamic" {
        return Ok(Window::Dynamic);
    }
    if spec == "fixed" {
        return Ok(Window::Fixed { k: 5 });
    }
    if let Some(k) = spec.strip_prefix("fixed:") {
        let k: usize = k.parse().map_err(|_| StageError {
            stage: Stage::Config,
            message: format!("bad fixed window size in {spec:?}"),
        })?;
        if k == 0 {
            return Err(StageError {
                stage: Stage::Config,
                message: "fixed window size must be >= 1".to_string(),
            });
        }
        return Ok(Window::Fixed { k });
    }
    Err(StageError {
        stage: Stage::Config,
        message: format!("window must be `dynamic` or `fixed:K`, found {spec:?}"),
    })
}

pub fn parse_log_base(spec: &str) -> Result<LogBase, StageError> {
    match spec {
        "2" => Ok(LogBase::Two),
        "e" => Ok(LogBase::E),
        other => Err(StageError {
            stage: Stage::Config,
            message: format!("log base must be 2 or e, found {other:?}"),
        }),
    }
}

/// Load and group an event log (parse stage).
pub fn load_log(spec: &InputSpec) -> Result<EventLog, StageError> {
    let format = spec.resolved_format()?;
    let file = fs::File::open(&spec.path).map_err(|e| StageError {
        stage: Stage::Parse,
        message: format!("{}: {e}", spec.path.display()),
    })?;
    let mut log = match format {
        "csv" => parse_csv(file, &spec.mapping).map_err(|e| stage_err(Stage::Parse, e))?,
        "xes" => parse_xes(file, &spec.xes).map_err(|e| stage_err(Stage::Parse, e))?,
        other => {
            return Err(StageError {
                stage: Stage::Config,
                message: format!("unknown format {other:?} (expected csv or xes)"),
            })
        }
    };
    log.source = spec.path.display().to_string();
    Ok(log)
}

pub fn stats_of(log: &EventLog) -> Result<LogStats, StageError> {
    log_stats(log).map_err(|e| stage_err(Stage::Parse, e))
}

/// Entropy report plus the most frequent transitions, as emitted by the
/// `entropy` subcommand.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EntropyReportJson {
    #[serde(flatten)]
    pub report: EntropyReport,
    pub top_transitions: Vec<TransitionJson>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransitionJson {
    pub from: String,
    pub to: String,
    pub count: u64,
    pub probability: f64,
}

pub fn entropy_stage(
    log: &EventLog,
    base: LogBase,
    bands: &BandThresholds,
    top: usize,
) -> Result<EntropyReportJson, StageError> {
    let model = count_transitions(log).map_err(|e| stage_err(Stage::Prepare, e))?;
    let report =
        process_entropy_with(&model, base, bands).map_err(|e| stage_err(Stage::Prepare, e))?;
    let top_transitions = model
        .top_transitions(top)
        .into_iter()
        .map(|(from, to, count, probability)| TransitionJson {
            from: from.to_string(),
            to: to.to_string(),
            count,
            probability,
        })
        .collect();
    Ok(EntropyReportJson {
        report,
        top_transitions,
    })
}

pub fn route_stage(
    log: &EventLog,
    report: &EntropyReport,
    policy: &RoutingPolicy,
) -> RoutingDecision {
    route(report, &log.label_histogram(), policy)
}

/// Everything `prepare` needs beyond the log itself.
#[derive(Clone, Debug)]
pub struct PrepareParams {
    pub attributes: Option<Vec<String>>,
    pub window: Window,
    pub test_fraction: f64,
    pub validation_fraction: f64,
    pub undersample_train: bool,
    pub seed: u64,
}

/// Encode, split case-atomically, optionally undersample the training part,
/// and write the manifest plus sample matrix into `dir`.
pub fn prepare_stage(
    log: &EventLog,
    params: &PrepareParams,
    dir: &Path,
) -> Result<(DatasetManifest, SplitDataset, u64), StageError> {
    let attributes = params
        .attributes
        .clone()
        .unwrap_or_else(|| default_attribute_selection(log));
    let case_ids: Vec<String> = log.traces.iter().map(|t| t.case_id.clone()).collect();
    let prepare_seed = stage_seed(params.seed, "prepare");
    let case_split = choose_case_split(
        &case_ids,
        params.test_fraction,
        params.validation_fraction,
        prepare_seed,
    )
    .map_err(|e| stage_err(Stage::Prepare, e))?;
    let encoders = fit_encoders(log, &attributes, &case_split.train_pool())
        .map_err(|e| stage_err(Stage::Prepare, e))?;
    let dataset = generate_prefix_samples(log, &encoders, params.window)
        .map_err(|e| stage_err(Stage::Prepare, e))?;
    let mut split = partition_by_case(&dataset, &case_split, prepare_seed);
    if params.undersample_train {
        split.train = undersample(&split.train, stage_seed(params.seed, "undersample"))
            .map_err(|e| stage_err(Stage::Prepare, e))?;
    }
    let manifest = DatasetManifest::new(
        &log.source,
        &split,
        params.seed,
        params.test_fraction,
        params.validation_fraction,
        params.undersample_train,
    );
    let hash = write_dataset(dir, &manifest, &split)?;
    Ok((manifest, split, hash))
}

/// Training settings resolved from flags/config.
#[derive(Clone, Debug)]
pub struct TrainParams {
    pub model: ModelFamily,
    pub profile: Profile,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub patience: Option<usize>,
    pub n_trees: Option<usize>,
    pub max_depth: Option<usize>,
    pub seed: u64,
}

/// Train the selected family on the prepared dataset and write the model
/// container next to it (or at `out`).
pub fn train_stage(
    data_dir: &Path,
    params: &TrainParams,
    out: Option<PathBuf>,
) -> Result<(PathBuf, ModelFile), StageError> {
    let (manifest, split, hash) = read_dataset(data_dir)?;
    let model = match params.model {
        ModelFamily::DawTransformer => {
            let config = TransformerConfig::for_dataset(&split.train, params.profile);
            let train_config = TrainConfig {
                learning_rate: params.learning_rate.unwrap_or(1e-3),
                batch_size: params.batch_size.unwrap_or(match params.profile {
                    Profile::Paper => 2,
                    Profile::Desk => 32,
                }),
                epochs: params.epochs.unwrap_or(50),
                patience: params.patience.or(Some(10)),
                seed: stage_seed(params.seed, "train"),
            };
            let state = train::<f64>(&split, &config, &train_config)
                .map_err(|e| stage_err(Stage::Train, e))?;
            ModelFile::Transformer {
                seed: params.seed,
                checkpoint: save_checkpoint(
                    &state.params,
                    &config,
                    hash,
                    &manifest.class_names,
                    &state.history,
                ),
            }
        }
        ModelFamily::DecisionTree | ModelFamily::RandomForest => {
            // Trees use the whole training pool; they have no early stopping.
            let mut vectors: Vec<Vec<f64>> = Vec::new();
            let mut labels: Vec<usize> = Vec::new();
            for sample in split
                .train
                .samples
                .iter()
                .chain(split.validation.samples.iter())
            {
                vectors.push(flatten_for_trees(sample));
                labels.push(sample.label);
            }
            if vectors.is_empty() {
                return Err(StageError {
                    stage: Stage::Train,
                    message: "prepared dataset has no training samples".to_string(),
                });
            }
            let tree_seed = stage_seed(params.seed, "train");
            if params.model == ModelFamily::DecisionTree {
                let config = TreeConfig {
                    max_depth: params.max_depth,
                    ..TreeConfig::default()
                };
                let root = fit_tree(
                    &vectors,
                    &labels,
                    manifest.class_names.len(),
                    &config,
                    tree_seed,
                )
                .map_err(|e| stage_err(Stage::Train, e))?;
                ModelFile::DecisionTree {
                    version: MODEL_FILE_VERSION,
                    manifest_hash: hash,
                    seed: params.seed,
                    class_names: manifest.class_names.clone(),
                    feature_names: manifest.tree_layout.clone(),
                    config,
                    root,
                }
            } else {
                let config = ForestConfig {
                    n_trees: params.n_trees.unwrap_or(100),
                    max_depth: params.max_depth,
                    seed: tree_seed,
                    ..ForestConfig::default()
                };
                let model = fit_forest(&vectors, &labels, &manifest.class_names, &config)
                    .map_err(|e| stage_err(Stage::Train, e))?;
                ModelFile::RandomForest {
                    version: MODEL_FILE_VERSION,
                    manifest_hash: hash,
                    seed: params.seed,
                    class_names: manifest.class_names.clone(),
                    feature_names: manifest.tree_layout.clone(),
                    model,
                }
            }
        }
    };
    let path = crate::manifest::model_path(data_dir, out);
    write_model(&path, &model)?;
    Ok((path, model))
}

/// Predictions of a stored model over a sample list.
pub fn model_predictions(
    model: &ModelFile,
    samples: &[procast_core::features::PrefixSample],
) -> Result<Vec<usize>, StageError> {
    match model {
        ModelFile::Transformer { checkpoint, .. } => {
            let (params, config, _) = load_checkpoint::<f64>(checkpoint, None)
                .map_err(|e| stage_err(Stage::Evaluate, e))?;
            predict_batch(&params, &config, samples).map_err(|e| stage_err(Stage::Evaluate, e))
        }
        ModelFile::DecisionTree { root, .. } => Ok(samples
            .iter()
            .map(|s| root.predict(&flatten_for_trees(s)))
            .collect()),
        ModelFile::RandomForest { model, .. } => samples
            .iter()
            .map(|s| {
                predict_forest(model, &flatten_for_trees(s))
                    .map(|(class, _)| class)
                    .map_err(|e| stage_err(Stage::Evaluate, e))
            })
            .collect(),
    }
}

/// Load the dataset and a model, verify the manifest hash, and score the
/// requested split.
pub fn evaluate_stage(
    data_dir: &Path,
    model_file: &Path,
    split_name: &str,
    base: LogBase,
    weighting: procast_core::eval::RowWeighting,
) -> Result<procast_core::eval::EvalReport, StageError> {
    let (manifest, split, _) = read_dataset(data_dir)?;
    let stored_hash = manifest_hash(data_dir)?;
    let model = read_model(model_file)?;
    if model.manifest_hash() != stored_hash {
        return Err(StageError {
            stage: Stage::Evaluate,
            message: format!(
                "model was trained against manifest {:016x}, dataset has {:016x}",
                model.manifest_hash(),
                stored_hash
            ),
        });
    }
    let dataset: &EncodedDataset = match split_name {
        "train" => &split.train,
        "validation" => &split.validation,
        "test" => &split.test,
        other => {
            return Err(StageError {
                stage: Stage::Config,
                message: format!("unknown split {other:?} (expected train|validation|test)"),
            })
        }
    };
    if dataset.samples.is_empty() {
        return Err(StageError {
            stage: Stage::Evaluate,
            message: format!("split {split_name} has no samples"),
        });
    }
    let predictions = model_predictions(&model, &dataset.samples)?;
    let labels: Vec<usize> = dataset.samples.iter().map(|s| s.label).collect();
    let mut report =
        procast_core::eval::evaluate(&predictions, &labels, &manifest.class_names, base)
            .map_err(|e| stage_err(Stage::Evaluate, e))?;
    report.cm_entropy = procast_core::eval::cm_entropy_with(&report.cm, base, weighting)
        .map_err(|e| stage_err(Stage::Evaluate, e))?;
    Ok(report)
}

/// Resolve the model family string.
pub fn parse_model_family(spec: &str) -> Result<ModelFamily, StageError> {
    match spec {
        "transformer" | "daw-transformer" => Ok(ModelFamily::DawTransformer),
        "forest" | "random-forest" => Ok(ModelFamily::RandomForest),
        "tree" | "decision-tree" => Ok(ModelFamily::DecisionTree),
        other => Err(StageError {
            stage: Stage::Config,
            message: format!("unknown model {other:?} (expected transformer|forest|tree)"),
        }),
    }
}

pub fn parse_profile(spec: &str) -> Result<Profile, StageError> {
    match spec {
        "paper" => Ok(Profile::Paper),
        "desk" => Ok(Profile::Desk),
        other => Err(StageError {
            stage: Stage::Config,
            message: format!("unknown profile {other:?} (expected paper|desk)"),
        }),
    }
}

/// Write pretty JSON to a file (any stage).
pub fn write_json<T: Serialize>(path: &Path, value: &T, stage: Stage) -> Result<(), StageError> {
    let json = serde_json::to_vec_pretty(value).map_err(|e| stage_err(stage, e))?;
    fs::write(path, json).map_err(|e| StageError {
        stage,
        message: format!("{}: {e}", path.display()),
    })
}

/// Print pretty JSON to stdout or write it to `out`.
pub fn emit_json<T: Serialize>(
    value: &T,
    out: Option<&Path>,
    stage: Stage,
) -> Result<(), StageError> {
    match out {
        Some(path) => write_json(path, value, stage),
        None => {
            let json = serde_json::to_string_pretty(value).map_err(|e| stage_err(stage, e))?;
            println!("{json}");
            Ok(())
        }
    }
}
