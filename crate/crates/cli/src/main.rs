//! `procast`: event-log complexity measurement and next-activity prediction.
//!
//! Subcommands compose into the `pipeline` command: `synth`/`stats` for data,
//! `entropy` and `route` for complexity-driven model selection, `prepare`,
//! `train`, `evaluate`, and `predict` for the modeling workflow. All
//! randomness derives from one root seed split per stage, so running stages
//! individually with the same seed reproduces a pipeline run.

mod config;
mod manifest;
mod pipeline;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use procast_core::entropy::BandThresholds;
use procast_core::eval::{render_heat_table, RowWeighting};
use procast_core::eventlog::ColumnMapping;
use procast_core::features::flatten_for_trees;
use procast_core::router::{MediumTarget, RoutingPolicy};
use procast_core::synth::{
    generate_synthetic_log, GrammarId, LengthDist, LogModel, SyntheticLogSpec,
};
use procast_core::transformer::{load_checkpoint, predict_next, TrainState};
use procast_core::trees::{predict_forest, PathStep};

use config::ConfigFile;
use manifest::{read_dataset, read_model, ModelFile};
use stages::{
    emit_json, entropy_stage, evaluate_stage, load_log, parse_log_base, parse_model_family,
    parse_profile, parse_type_hints, parse_window, prepare_stage, route_stage, stage_err, stats_of,
    train_stage, InputSpec, PrepareParams, Stage, StageError, TrainParams,
};

#[derive(Parser)]
#[command(
    name = "procast",
    version,
    about = "Process-entropy analysis and next-activity prediction for event logs"
)]
struct Cli {
    /// Key-value config file (`key = value` lines); flags win over the file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

// The parsed command lives once on the stack; variant size is irrelevant.
#[allow(clippy::large_enum_variant)]
#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic event log (Markov chain or deterministic grammar).
    Synth(SynthArgs),
    /// Print case/event/activity statistics of a log.
    Stats(StatsArgs),
    /// Compute the transition-entropy report of one or more logs.
    Entropy(EntropyArgs),
    /// Select a model family from a log's entropy band.
    Route(RouteArgs),
    /// Encode a log into prefix samples and write manifest + sample matrix.
    Prepare(PrepareArgs),
    /// Train a model on a prepared dataset.
    Train(TrainArgs),
    /// Score a trained model on a dataset split.
    Evaluate(EvaluateArgs),
    /// Rank next activities for one prepared sample.
    Predict(PredictArgs),
    /// Run entropy, routing, prepare, train, and evaluate end to end.
    Pipeline(pipeline::PipelineArgs),
}

/// Input file plus CSV mapping flags.
#[derive(Args, Clone, Debug, Default)]
pub(crate) struct InputArgs {
    /// Event log file (.csv, .xes, .xes.gz).
    #[arg(long)]
    input: Option<PathBuf>,
    /// csv or xes; inferred from the extension when omitted.
    #[arg(long)]
    format: Option<String>,
    /// CSV column holding the case id.
    #[arg(long)]
    case_col: Option<String>,
    /// CSV column holding the activity.
    #[arg(long)]
    activity_col: Option<String>,
    /// CSV column holding the timestamp.
    #[arg(long)]
    timestamp_col: Option<String>,
    /// chrono pattern for CSV timestamps (default: ISO-8601).
    #[arg(long)]
    timestamp_format: Option<String>,
    /// CSV delimiter (default `,`).
    #[arg(long)]
    delimiter: Option<char>,
    /// Extra-column types: `col:numeric,col:categorical,col:timestamp`.
    #[arg(long)]
    type_hints: Option<String>,
    /// Synthesize row-order timestamps for XES events without one.
    #[arg(long)]
    timestamp_fallback: bool,
}

impl InputArgs {
    pub(crate) fn resolve(&self, cfg: &ConfigFile) -> Result<InputSpec, StageError> {
        let path: PathBuf = cfg
            .lookup(self.input.clone(), "input")?
            .ok_or_else(|| StageError {
                stage: Stage::Config,
                message: "no input file given (--input or config key `input`)".to_string(),
            })?;
        let case = cfg.resolve(self.case_col.clone(), "case-col", "case_id".to_string())?;
        let activity = cfg.resolve(
            self.activity_col.clone(),
            "activity-col",
            "activity".to_string(),
        )?;
        let timestamp = cfg.resolve(
            self.timestamp_col.clone(),
            "timestamp-col",
            "timestamp".to_string(),
        )?;
        let mut mapping = ColumnMapping::new(&case, &activity, &timestamp);
        if let Some(fmt) = cfg.lookup(self.timestamp_format.clone(), "timestamp-format")? {
            mapping = mapping.with_format(&fmt);
        }
        let delimiter: char = cfg.resolve(self.delimiter, "delimiter", ',')?;
        mapping = mapping.with_delimiter(delimiter as u8);
        if let Some(hints) = cfg.lookup(self.type_hints.clone(), "type-hints")? {
            mapping.type_hints = parse_type_hints(&hints)?;
        }
        Ok(InputSpec {
            path,
            format: cfg.lookup(self.format.clone(), "format")?,
            mapping,
            xes: procast_core::eventlog::XesOptions {
                timestamp_fallback: cfg.switch(self.timestamp_fallback, "timestamp-fallback")?,
            },
        })
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Generator: `uniform:K`, `self-loop`, `first-symbol-repeat`, or
    /// `long-range`.
    #[arg(long)]
    model: String,
    #[arg(long, default_value_t = 100)]
    traces: usize,
    /// Trace length: `L` or `LO:HI` (uniform, inclusive).
    #[arg(long, default_value = "6")]
    length: String,
    /// Start-symbol count for grammars (chains take K from `uniform:K`).
    #[arg(long, default_value_t = 4)]
    alphabet: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EntropyArgs {
    /// One or more inputs; several inputs are normalized against their
    /// maximum entropy.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[command(flatten)]
    mapping: MappingOnlyArgs,
    /// Logarithm base: 2 or e.
    #[arg(long)]
    base: Option<String>,
    /// Low band threshold.
    #[arg(long)]
    low: Option<f64>,
    /// High band threshold.
    #[arg(long)]
    high: Option<f64>,
    /// Transitions listed in the report.
    #[arg(long, default_value_t = 10)]
    top: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Mapping flags shared by commands that never take `--input` themselves.
#[derive(Args, Clone, Debug, Default)]
struct MappingOnlyArgs {
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    case_col: Option<String>,
    #[arg(long)]
    activity_col: Option<String>,
    #[arg(long)]
    timestamp_col: Option<String>,
    #[arg(long)]
    timestamp_format: Option<String>,
    #[arg(long)]
    delimiter: Option<char>,
    #[arg(long)]
    type_hints: Option<String>,
    #[arg(long)]
    timestamp_fallback: bool,
}

impl MappingOnlyArgs {
    fn input_args(&self, input: Option<PathBuf>) -> InputArgs {
        InputArgs {
            input,
            format: self.format.clone(),
            case_col: self.case_col.clone(),
            activity_col: self.activity_col.clone(),
            timestamp_col: self.timestamp_col.clone(),
            timestamp_format: self.timestamp_format.clone(),
            delimiter: self.delimiter,
            type_hints: self.type_hints.clone(),
            timestamp_fallback: self.timestamp_fallback,
        }
    }
}

#[derive(Args, Clone, Debug)]
pub(crate) struct PolicyArgs {
    #[arg(long)]
    low: Option<f64>,
    #[arg(long)]
    high: Option<f64>,
    /// Medium-band target: transformer or trees.
    #[arg(long)]
    medium_target: Option<String>,
    /// Prefer a single readable tree over a forest on the tree path.
    #[arg(long)]
    prefer_interpretable: bool,
    /// Warn at this max/min class-count ratio.
    #[arg(long)]
    imbalance_warn: Option<f64>,
}

impl PolicyArgs {
    pub(crate) fn resolve(&self, cfg: &ConfigFile) -> Result<RoutingPolicy, StageError> {
        let defaults = RoutingPolicy::default();
        let medium = cfg.resolve(
            self.medium_target.clone(),
            "medium-target",
            "transformer".to_string(),
        )?;
        let medium_target = match medium.as_str() {
            "transformer" => MediumTarget::Transformer,
            "trees" => MediumTarget::Trees,
            other => {
                return Err(StageError {
                    stage: Stage::Config,
                    message: format!("medium-target must be transformer or trees, found {other:?}"),
                })
            }
        };
        let policy = RoutingPolicy {
            low_threshold: cfg.resolve(self.low, "low", defaults.low_threshold)?,
            high_threshold: cfg.resolve(self.high, "high", defaults.high_threshold)?,
            medium_target,
            prefer_interpretable: cfg.switch(self.prefer_interpretable, "prefer-interpretable")?,
            imbalance_ratio_warn: cfg.resolve(
                self.imbalance_warn,
                "imbalance-warn",
                defaults.imbalance_ratio_warn,
            )?,
        };
        if policy.low_threshold >= policy.high_threshold {
            return Err(StageError {
                stage: Stage::Config,
                message: format!(
                    "low threshold {} must be below high threshold {}",
                    policy.low_threshold, policy.high_threshold
                ),
            });
        }
        Ok(policy)
    }
}

#[derive(Args)]
struct RouteArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    base: Option<String>,
    #[command(flatten)]
    policy: PolicyArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Encoding and split flags shared by `prepare` and `pipeline`.
#[derive(Args, Clone, Debug, Default)]
pub(crate) struct PrepareFlags {
    /// `dynamic` or `fixed:K`.
    #[arg(long)]
    window: Option<String>,
    /// Comma-separated attribute names (activity is always included).
    #[arg(long)]
    attrs: Option<String>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    validation_fraction: Option<f64>,
    /// Undersample the training part to the minority class.
    #[arg(long)]
    undersample: bool,
}

impl PrepareFlags {
    pub(crate) fn params(&self, cfg: &ConfigFile, seed: u64) -> Result<PrepareParams, StageError> {
        let attrs: Option<String> = cfg.lookup(self.attrs.clone(), "attrs")?;
        Ok(PrepareParams {
            attributes: attrs.map(|a| {
                a.split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect()
            }),
            window: parse_window(&cfg.resolve(
                self.window.clone(),
                "window",
                "dynamic".to_string(),
            )?)?,
            test_fraction: cfg.resolve(self.test_fraction, "test-fraction", 0.2)?,
            validation_fraction: cfg.resolve(
                self.validation_fraction,
                "validation-fraction",
                0.2,
            )?,
            undersample_train: cfg.switch(self.undersample, "undersample")?,
            seed,
        })
    }
}

#[derive(Args)]
struct PrepareArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Output dataset directory.
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    flags: PrepareFlags,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone, Debug)]
pub(crate) struct TrainFlags {
    /// transformer, forest, or tree.
    #[arg(long)]
    model: Option<String>,
    /// paper or desk hyperparameters.
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Early stopping patience in epochs.
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    n_trees: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
}

impl TrainFlags {
    pub(crate) fn params(
        &self,
        cfg: &ConfigFile,
        seed: u64,
        default_model: &str,
    ) -> Result<TrainParams, StageError> {
        Ok(TrainParams {
            model: parse_model_family(&cfg.resolve(
                self.model.clone(),
                "model",
                default_model.to_string(),
            )?)?,
            profile: parse_profile(&cfg.resolve(
                self.profile.clone(),
                "profile",
                "desk".to_string(),
            )?)?,
            epochs: cfg.lookup(self.epochs, "epochs")?,
            batch_size: cfg.lookup(self.batch_size, "batch-size")?,
            learning_rate: cfg.lookup(self.learning_rate, "learning-rate")?,
            patience: cfg.lookup(self.patience, "patience")?,
            n_trees: cfg.lookup(self.n_trees, "n-trees")?,
            max_depth: cfg.lookup(self.max_depth, "max-depth")?,
            seed,
        })
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Prepared dataset directory (from `prepare`).
    #[arg(long)]
    data_dir: PathBuf,
    #[command(flatten)]
    flags: TrainFlags,
    #[arg(long)]
    seed: Option<u64>,
    /// Model output path (default: <data-dir>/model.json).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// train, validation, or test.
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long)]
    base: Option<String>,
    /// Row weighting of the confusion-matrix entropy: support or uniform.
    #[arg(long, default_value = "support")]
    weighting: String,
    /// Also dump raw and normalized matrices as CSV next to the report.
    #[arg(long)]
    dump_cm: bool,
    /// Print the normalized matrix as a text heat table.
    #[arg(long)]
    heat: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Split to pick the sample from.
    #[arg(long, default_value = "test")]
    split: String,
    /// Sample index within the split.
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Print the tree decision path (tree/forest models).
    #[arg(long)]
    explain: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error in {} stage: {}", e.stage.name(), e.message);
            ExitCode::from(e.stage.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), StageError> {
    let cfg = ConfigFile::load(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(args) => run_synth(args, &cfg),
        Command::Stats(args) => {
            let log = load_log(&args.input.resolve(&cfg)?)?;
            emit_json(&stats_of(&log)?, args.out.as_deref(), Stage::Parse)
        }
        Command::Entropy(args) => run_entropy(args, &cfg),
        Command::Route(args) => run_route(args, &cfg),
        Command::Prepare(args) => {
            let spec = args.input.resolve(&cfg)?;
            let seed = cfg.resolve(args.seed, "seed", 42)?;
            let params = args.flags.params(&cfg, seed)?;
            let log = load_log(&spec)?;
            let (manifest, _, _) = prepare_stage(&log, &params, &args.out_dir)?;
            eprintln!(
                "prepared {} samples (train {}, validation {}, test {}) in {}",
                manifest.counts.train + manifest.counts.validation + manifest.counts.test,
                manifest.counts.train,
                manifest.counts.validation,
                manifest.counts.test,
                args.out_dir.display()
            );
            warn_zero_variance(&manifest);
            Ok(())
        }
        Command::Train(args) => {
            let seed = cfg.resolve(args.seed, "seed", 42)?;
            let params = args.flags.params(&cfg, seed, "transformer")?;
            let (path, model) = train_stage(&args.data_dir, &params, args.out)?;
            eprintln!("trained {} model -> {}", model.kind(), path.display());
            Ok(())
        }
        Command::Evaluate(args) => run_evaluate(args, &cfg),
        Command::Predict(args) => run_predict(args, &cfg),
        Command::Pipeline(args) => pipeline::run_pipeline(args, &cfg),
    }
}

fn warn_zero_variance(manifest: &manifest::DatasetManifest) {
    for enc in &manifest.encoders {
        if let procast_core::features::EncoderKind::Numeric {
            zero_variance: true,
            ..
        } = enc.kind
        {
            eprintln!(
                "warning: numeric attribute {} has zero variance on the training cases; \
                 standardized values are 0",
                enc.attribute
            );
        }
    }
}

fn run_synth(args: SynthArgs, cfg: &ConfigFile) -> Result<(), StageError> {
    let seed = cfg.resolve(Some(args.seed), "seed", 42)?;
    let lengths = if let Some((lo, hi)) = args.length.split_once(':') {
        let lo = lo.parse().map_err(|_| bad_length(&args.length))?;
        let hi = hi.parse().map_err(|_| bad_length(&args.length))?;
        LengthDist::Uniform(lo, hi)
    } else {
        LengthDist::Fixed(args.length.parse().map_err(|_| bad_length(&args.length))?)
    };
    let (model, alphabet) = if let Some(k) = args.model.strip_prefix("uniform:") {
        let k: usize = k.parse().map_err(|_| StageError {
            stage: Stage::Config,
            message: format!("bad chain size in {:?}", args.model),
        })?;
        (LogModel::uniform_chain(k), k)
    } else if args.model == "self-loop" {
        (LogModel::deterministic_chain(), 1)
    } else if let Some(grammar) = GrammarId::parse(&args.model) {
        (LogModel::Grammar(grammar), args.alphabet)
    } else {
        return Err(StageError {
            stage: Stage::Config,
            message: format!(
                "unknown model {:?} (expected uniform:K, self-loop, first-symbol-repeat, long-range)",
                args.model
            ),
        });
    };
    let log = generate_synthetic_log(&SyntheticLogSpec {
        alphabet,
        model,
        traces: args.traces,
        lengths,
        seed,
    })
    .map_err(|e| stage_err(Stage::Config, e))?;

    let mut out = String::from("case_id,activity,timestamp\n");
    for trace in &log.traces {
        for event in &trace.events {
            out.push_str(&format!(
                "{},{},{}\n",
                event.case_id,
                event.activity,
                event
                    .timestamp
                    .to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
            ));
        }
    }
    std::fs::write(&args.out, out).map_err(|e| StageError {
        stage: Stage::Parse,
        message: format!("{}: {e}", args.out.display()),
    })?;
    eprintln!(
        "wrote {} traces / {} events to {}",
        log.traces.len(),
        log.total_events(),
        args.out.display()
    );
    Ok(())
}

fn bad_length(spec: &str) -> StageError {
    StageError {
        stage: Stage::Config,
        message: format!("length must be `L` or `LO:HI`, found {spec:?}"),
    }
}

fn run_entropy(args: EntropyArgs, cfg: &ConfigFile) -> Result<(), StageError> {
    let base = parse_log_base(&cfg.resolve(args.base.clone(), "base", "2".to_string())?)?;
    let bands = BandThresholds {
        low: cfg.resolve(args.low, "low", 3.0)?,
        high: cfg.resolve(args.high, "high", 5.0)?,
    };
    let mut reports = Vec::new();
    for input in &args.input {
        let spec = args.mapping.input_args(Some(input.clone())).resolve(cfg)?;
        let log = load_log(&spec)?;
        reports.push(entropy_stage(&log, base, &bands, args.top)?);
    }
    if reports.len() > 1 {
        let mut inner: Vec<_> = reports.iter().map(|r| r.report.clone()).collect();
        procast_core::entropy::normalize_entropies(&mut inner)
            .map_err(|e| stage_err(Stage::Prepare, e))?;
        for (report, normalized) in reports.iter_mut().zip(inner) {
            report.report = normalized;
        }
        emit_json(&reports, args.out.as_deref(), Stage::Prepare)
    } else {
        emit_json(&reports[0], args.out.as_deref(), Stage::Prepare)
    }
}

fn run_route(args: RouteArgs, cfg: &ConfigFile) -> Result<(), StageError> {
    let base = parse_log_base(&cfg.resolve(args.base.clone(), "base", "2".to_string())?)?;
    let policy = args.policy.resolve(cfg)?;
    let bands = BandThresholds {
        low: policy.low_threshold,
        high: policy.high_threshold,
    };
    let log = load_log(&args.input.resolve(cfg)?)?;
    let report = entropy_stage(&log, base, &bands, 10)?;
    let decision = route_stage(&log, &report.report, &policy);
    emit_json(&decision, args.out.as_deref(), Stage::Prepare)
}

fn run_evaluate(args: EvaluateArgs, cfg: &ConfigFile) -> Result<(), StageError> {
    let base = parse_log_base(&cfg.resolve(args.base.clone(), "base", "2".to_string())?)?;
    let weighting = match args.weighting.as_str() {
        "support" => RowWeighting::Support,
        "uniform" => RowWeighting::Uniform,
        other => {
            return Err(StageError {
                stage: Stage::Config,
                message: format!("weighting must be support or uniform, found {other:?}"),
            })
        }
    };
    let report = evaluate_stage(&args.data_dir, &args.model, &args.split, base, weighting)?;
    if args.heat {
        eprintln!(
            "{}",
            render_heat_table(&report.cm_normalized, &report.cm.class_names)
        );
    }
    if args.dump_cm {
        dump_confusion_csv(&args.data_dir, &report)?;
    }
    emit_json(&report, args.out.as_deref(), Stage::Evaluate)
}

fn dump_confusion_csv(
    dir: &std::path::Path,
    report: &procast_core::eval::EvalReport,
) -> Result<(), StageError> {
    let mut raw = String::from("true\\pred");
    for name in &report.cm.class_names {
        raw.push(',');
        raw.push_str(name);
    }
    raw.push('\n');
    let mut normalized = raw.clone();
    for (i, name) in report.cm.class_names.iter().enumerate() {
        raw.push_str(name);
        normalized.push_str(name);
        for j in 0..report.cm.class_names.len() {
            raw.push_str(&format!(",{}", report.cm.counts[i][j]));
            normalized.push_str(&format!(",{}", report.cm_normalized[i][j]));
        }
        raw.push('\n');
        normalized.push('\n');
    }
    for (file, content) in [
        ("confusion.csv", raw),
        ("confusion_normalized.csv", normalized),
    ] {
        let path = dir.join(file);
        std::fs::write(&path, content).map_err(|e| StageError {
            stage: Stage::Evaluate,
            message: format!("{}: {e}", path.display()),
        })?;
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct PredictionJson {
    case_id: String,
    position: usize,
    prefix: Vec<String>,
    label: String,
    ranked: Vec<RankedClass>,
    explanation: Option<Vec<String>>,
}

#[derive(serde::Serialize)]
struct RankedClass {
    class: String,
    probability: f64,
}

fn run_predict(args: PredictArgs, _cfg: &ConfigFile) -> Result<(), StageError> {
    let (manifest, split, stored_hash) = read_dataset(&args.data_dir)?;
    let model = read_model(&args.model)?;
    if model.manifest_hash() != stored_hash {
        return Err(StageError {
            stage: Stage::Evaluate,
            message: "model was trained against a different manifest".to_string(),
        });
    }
    let dataset = match args.split.as_str() {
        "train" => &split.train,
        "validation" => &split.validation,
        "test" => &split.test,
        other => {
            return Err(StageError {
                stage: Stage::Config,
                message: format!("unknown split {other:?}"),
            })
        }
    };
    let sample = dataset.samples.get(args.index).ok_or_else(|| StageError {
        stage: Stage::Evaluate,
        message: format!(
            "sample index {} outside split of {} samples",
            args.index,
            dataset.samples.len()
        ),
    })?;

    let activity_encoder = manifest
        .encoders
        .iter()
        .find(|e| e.attribute == "activity")
        .expect("manifest always carries the activity encoder");
    let prefix: Vec<String> = sample.categorical[0]
        .iter()
        .zip(&sample.mask)
        .filter(|(_, &m)| m)
        .map(|(&i, _)| activity_encoder.token(i).unwrap_or("<unk>").to_string())
        .collect();

    let (ranked, explanation) = match &model {
        ModelFile::Transformer { checkpoint, .. } => {
            let (params, config, class_names) =
                load_checkpoint::<f64>(checkpoint, Some(stored_hash))
                    .map_err(|e| stage_err(Stage::Evaluate, e))?;
            let state = TrainState::new(params);
            let ranked = predict_next(&state, sample, &config, &class_names)
                .map_err(|e| stage_err(Stage::Evaluate, e))?;
            (ranked, None)
        }
        ModelFile::DecisionTree {
            root,
            class_names,
            feature_names,
            ..
        } => {
            let vector = flatten_for_trees(sample);
            let path = explain_path(&root.decision_path(&vector), feature_names, class_names);
            let class = root.predict(&vector);
            let mut ranked: Vec<(String, f64)> = class_names
                .iter()
                .enumerate()
                .map(|(i, name)| (name.clone(), f64::from(u8::from(i == class))))
                .collect();
            ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
            (ranked, args.explain.then_some(path))
        }
        ModelFile::RandomForest {
            model: forest,
            class_names,
            feature_names,
            ..
        } => {
            let vector = flatten_for_trees(sample);
            let (_, votes) =
                predict_forest(forest, &vector).map_err(|e| stage_err(Stage::Evaluate, e))?;
            let total: u64 = votes.iter().sum();
            let mut ranked: Vec<(String, f64)> = class_names
                .iter()
                .zip(&votes)
                .map(|(name, &v)| (name.clone(), v as f64 / total as f64))
                .collect();
            ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
            let explanation = args.explain.then(|| {
                explain_path(
                    &forest.trees[0].decision_path(&vector),
                    feature_names,
                    class_names,
                )
            });
            (ranked, explanation)
        }
    };

    let output = PredictionJson {
        case_id: sample.case_id.clone(),
        position: sample.position,
        prefix,
        label: manifest
            .class_names
            .get(sample.label)
            .cloned()
            .unwrap_or_default(),
        ranked: ranked
            .into_iter()
            .map(|(class, probability)| RankedClass { class, probability })
            .collect(),
        explanation,
    };
    emit_json(&output, args.out.as_deref(), Stage::Evaluate)
}

fn explain_path(
    path: &[PathStep<f64>],
    feature_names: &[String],
    class_names: &[String],
) -> Vec<String> {
    path.iter()
        .map(|step| match step {
            PathStep::Split {
                feature,
                threshold,
                value,
                went_left,
            } => {
                let name = feature_names
                    .get(*feature)
                    .map(String::as_str)
                    .unwrap_or("feature");
                format!(
                    "{name} = {value} {} {threshold}",
                    if *went_left { "<=" } else { ">" }
                )
            }
            PathStep::Leaf {
                class,
                distribution,
            } => format!(
                "leaf: {} {:?}",
                class_names.get(*class).map(String::as_str).unwrap_or("?"),
                distribution
            ),
        })
        .collect()
}
