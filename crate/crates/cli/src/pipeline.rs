//! End-to-end run: entropy, routing, prepare, train, evaluate.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use procast_core::entropy::{BandThresholds, LogBase};
use procast_core::router::{ModelFamily, RoutingDecision};
use procast_core::seed::stage_seed;

use crate::config::ConfigFile;
use crate::stages::{
    entropy_stage, evaluate_stage, load_log, parse_log_base, prepare_stage, route_stage,
    train_stage, Stage, StageError,
};
use crate::{InputArgs, PolicyArgs, PrepareFlags, TrainFlags};

#[derive(Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Artifact directory (entropy/route reports, dataset, model, eval,
    /// summary).
    #[arg(long)]
    out_dir: PathBuf,
    /// Logarithm base for entropy values: 2 or e.
    #[arg(long)]
    base: Option<String>,
    #[command(flatten)]
    policy: PolicyArgs,
    #[command(flatten)]
    prepare: PrepareFlags,
    #[command(flatten)]
    train: TrainFlags,
    /// Root seed; every stage derives its own seed from it.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct RunSummary {
    version: String,
    input: String,
    root_seed: u64,
    stage_seeds: BTreeMap<String, u64>,
    entropy: f64,
    log_base: LogBase,
    decision: RoutingDecision,
    model_kind: String,
    test_accuracy: f64,
    cm_entropy: f64,
    artifacts: BTreeMap<String, String>,
    /// Wall-clock metadata; excluded from reproducibility comparisons.
    generated_at: String,
}

pub fn run_pipeline(args: PipelineArgs, cfg: &ConfigFile) -> Result<(), StageError> {
    // Resolve everything first so configuration errors surface before any
    // artifact is written.
    let spec = args.input.resolve(cfg)?;
    let base = parse_log_base(&cfg.resolve(args.base.clone(), "base", "2".to_string())?)?;
    let policy = args.policy.resolve(cfg)?;
    let seed = cfg.resolve(args.seed, "seed", 42)?;
    let prepare_params = args.prepare.params(cfg, seed)?;

    // Parse. Nothing is written until the input has loaded.
    let log = load_log(&spec)?;

    let dir = &args.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| StageError {
        stage: Stage::Prepare,
        message: format!("{}: {e}", dir.display()),
    })?;

    // Entropy and routing.
    let bands = BandThresholds {
        low: policy.low_threshold,
        high: policy.high_threshold,
    };
    let entropy = entropy_stage(&log, base, &bands, 10)?;
    crate::stages::write_json(&dir.join("entropy.json"), &entropy, Stage::Prepare)?;
    let decision = route_stage(&log, &entropy.report, &policy);
    crate::stages::write_json(&dir.join("route.json"), &decision, Stage::Prepare)?;
    for warning in &decision.warnings {
        eprintln!("warning: {warning}");
    }

    // Prepare.
    let (manifest, _, _) = prepare_stage(&log, &prepare_params, dir)?;

    // Train the routed family unless the flags override it.
    let routed = match decision.chosen {
        ModelFamily::DawTransformer => "transformer",
        ModelFamily::RandomForest => "forest",
        ModelFamily::DecisionTree => "tree",
    };
    let train_params = args.train.params(cfg, seed, routed)?;
    let (model_path, model) = train_stage(dir, &train_params, None)?;

    // Evaluate on the held-out test split.
    let report = evaluate_stage(
        dir,
        &model_path,
        "test",
        base,
        procast_core::eval::RowWeighting::Support,
    )?;
    crate::stages::write_json(&dir.join("eval.json"), &report, Stage::Evaluate)?;

    let summary = RunSummary {
        version: env!("CARGO_PKG_VERSION").to_string(),
        input: log.source.clone(),
        root_seed: seed,
        stage_seeds: ["prepare", "undersample", "train"]
            .iter()
            .map(|s| (s.to_string(), stage_seed(seed, s)))
            .collect(),
        entropy: entropy.report.entropy,
        log_base: base,
        decision,
        model_kind: model.kind().to_string(),
        test_accuracy: report.accuracy,
        cm_entropy: report.cm_entropy,
        artifacts: [
            ("entropy", "entropy.json"),
            ("route", "route.json"),
            ("manifest", "manifest.json"),
            ("samples", manifest.samples_file.as_str()),
            ("model", "model.json"),
            ("eval", "eval.json"),
        ]
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect(),
        generated_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
    };
    crate::stages::write_json(&dir.join("summary.json"), &summary, Stage::Evaluate)?;

    eprintln!(
        "pipeline complete: {} -> {} (entropy {:.3}, accuracy {:.3})",
        log.source, summary.model_kind, summary.entropy, summary.test_accuracy
    );
    Ok(())
}
