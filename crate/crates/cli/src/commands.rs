//! Subcommand definitions and implementations.
//!
//! Every command reads an optional JSON config, applies flag overrides
//! (flags win), does its work through the library crate, and writes its
//! outputs plus a [`RunManifest`] into the output directory. Exit codes
//! are a stable scripting contract: 0 success, 2 usage/input error,
//! 3 runtime failure.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use iottrust::dataset::{
    consolidate_answers, encode_dataset, filter_by_duration, interpolate, parse_survey_csv, split,
    write_survey_csv, Dataset, EncodingConfig,
};
use iottrust::error::Error;
use iottrust::evaluation::{
    ablate_by_perspective, confidence_curve, evaluate_model, timing_benchmark,
    write_confidence_csv, write_timing_csv, ExperimentConfig,
};
use iottrust::model::{
    attribute_significance, build_network, prune_attributes, train, SignificanceReport,
    TRUST_LEVELS,
};
use iottrust::service::ReliabilityMode;
use iottrust::simulator::{simulate_dataset, SimConfig};
use iottrust::{Assessment, Network, ReputationTables};

use crate::manifest::RunManifest;

/// Classified CLI failure; the variant fixes the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, configs, or input files.
    Usage(String),
    /// Failure inside an otherwise valid run (training divergence).
    Runtime(String),
}

impl CliError {
    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(msg) | CliError::Runtime(msg) => msg,
        }
    }

    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        match err {
            Error::Training { .. } => CliError::Runtime(err.to_string()),
            _ => CliError::Usage(err.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Usage(err.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(err: csv::Error) -> Self {
        CliError::Usage(err.to_string())
    }
}

type CmdResult = Result<(), CliError>;

/// Batch pipeline for the IoT service trust model: simulate or ingest
/// data, train trust models, and run the evaluation suites.
#[derive(Debug, Parser)]
#[command(name = "iottrust", version, propagate_version = true)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic social-IoT scenario and its encoded dataset.
    Simulate(SimulateArgs),
    /// Consolidate a survey CSV and encode it into a dataset.
    Ingest(IngestArgs),
    /// Keep survey responses whose completion time lies in a window.
    Filter(FilterArgs),
    /// Inflate a dataset by same-level convex interpolation.
    Interpolate(InterpolateArgs),
    /// Train a trust model; write the model and its loss history.
    Train(TrainArgs),
    /// Assess feature vectors with a trained model.
    Assess(AssessArgs),
    /// Compute input-output attribute significance for a model.
    Significance(SignificanceArgs),
    /// Evaluate a trained model on a labeled dataset.
    Evaluate(EvaluateArgs),
    /// Retrain per perspective and compare against the full model.
    Ablate(AblateArgs),
    /// Measure training wall time across epoch counts.
    Benchmark(BenchmarkArgs),
}

pub fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Ingest(args) => cmd_ingest(args),
        Command::Filter(args) => cmd_filter(args),
        Command::Interpolate(args) => cmd_interpolate(args),
        Command::Train(args) => cmd_train(args),
        Command::Assess(args) => cmd_assess(args),
        Command::Significance(args) => cmd_significance(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Benchmark(args) => cmd_benchmark(args),
    }
}

fn parse_mode(s: &str) -> Result<ReliabilityMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Simulator config JSON; flags override its fields.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Root seed; required here or as `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Emitted sample count override.
    #[arg(long)]
    samples: Option<usize>,
    /// Reliability aggregation mode: paper_verbatim or duration_normalized.
    #[arg(long, value_parser = parse_mode, value_name = "MODE")]
    mode: Option<ReliabilityMode>,
    /// Output directory (scenario.json, dataset.csv, manifest.json).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

fn cmd_simulate(args: SimulateArgs) -> CmdResult {
    let started = Instant::now();
    let value = match &args.config {
        Some(path) => read_json(path)?,
        None => serde_json::Value::Object(serde_json::Map::new()),
    };
    // The config type defaults every field, but reproducibility hinges on
    // the seed, so it alone must be stated somewhere.
    if args.seed.is_none() && value.get("seed").is_none() {
        return Err(CliError::Usage(
            "missing `seed`: set the seed field in the config or pass --seed".to_string(),
        ));
    }
    let mut cfg: SimConfig = from_json(value, "simulator config")?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(samples) = args.samples {
        cfg.samples = samples;
    }
    if let Some(mode) = args.mode {
        cfg.encoding.reliability_mode = mode;
    }

    let (scenario, dataset) = simulate_dataset(&cfg)?;

    ensure_out_dir(&args.out)?;
    let scenario_path = args.out.join("scenario.json");
    let dataset_path = args.out.join("dataset.csv");
    scenario.save(&scenario_path)?;
    dataset.to_csv(&dataset_path)?;

    let mut manifest = RunManifest::new("simulate");
    manifest
        .config(args.config.as_deref())
        .seed(cfg.seed)
        .output(&scenario_path)
        .output(&dataset_path)
        .note("population", cfg.population)
        .note("samples", dataset.len())
        .note("dataset_fingerprint", dataset.fingerprint());
    manifest.write(&args.out, started)?;
    Ok(())
}

/// Ingest parameters: consolidation plus feature encoding.
#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
struct IngestConfig {
    /// Redundancy group size (workers per survey).
    group_size: usize,
    /// Ratings deviating more than this from the group mean flag the group.
    deviation_threshold: f64,
    /// Tie-break seed for choosing each group's representative.
    seed: u64,
    encoding: EncodingConfig,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            group_size: 10,
            deviation_threshold: 2.0,
            seed: 0,
            encoding: EncodingConfig::default(),
        }
    }
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Survey CSV (run `filter` first to apply the completion-time window).
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Reputation tables CSV (kind,value_name,reputation,popularity).
    #[arg(long, value_name = "PATH")]
    tables: PathBuf,
    /// Ingest config JSON; flags override its fields.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Consolidation tie-break seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Reliability aggregation mode: paper_verbatim or duration_normalized.
    #[arg(long, value_parser = parse_mode, value_name = "MODE")]
    mode: Option<ReliabilityMode>,
    /// Output directory (dataset.csv, manifest.json).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

fn cmd_ingest(args: IngestArgs) -> CmdResult {
    let started = Instant::now();
    let mut cfg: IngestConfig = match &args.config {
        Some(path) => from_json(read_json(path)?, "ingest config")?,
        None => IngestConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = args.mode {
        cfg.encoding.reliability_mode = mode;
    }

    let tables = ReputationTables::from_csv(&args.tables)?;
    let (responses, parse_report) = parse_survey_csv(&args.input)?;
    let (consolidated, consolidation) = consolidate_answers(
        &responses,
        cfg.group_size,
        cfg.deviation_threshold,
        cfg.seed,
    )?;
    let dataset = encode_dataset(&consolidated, &tables, &cfg.encoding)?;

    ensure_out_dir(&args.out)?;
    let dataset_path = args.out.join("dataset.csv");
    dataset.to_csv(&dataset_path)?;

    let mut manifest = RunManifest::new("ingest");
    manifest
        .config(args.config.as_deref())
        .seed(cfg.seed)
        .input(&args.input)
        .input(&args.tables)
        .output(&dataset_path)
        .note("rows_accepted", parse_report.accepted)
        .note("rows_rejected", parse_report.rejected.len())
        .note("groups_total", consolidation.groups_total)
        .note("groups_consolidated", consolidation.consolidated)
        .note("flagged_surveys", consolidation.flagged.clone())
        .note("samples", dataset.len());
    manifest.write(&args.out, started)?;
    Ok(())
}

#[derive(Debug, Args)]
struct FilterArgs {
    /// Survey CSV to filter.
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Minimum completion time in seconds (inclusive).
    #[arg(long, default_value_t = 60.0)]
    min_s: f64,
    /// Maximum completion time in seconds (inclusive).
    #[arg(long, default_value_t = 300.0)]
    max_s: f64,
    /// Output directory (filtered.csv, manifest.json).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

fn cmd_filter(args: FilterArgs) -> CmdResult {
    let started = Instant::now();
    let (responses, parse_report) = parse_survey_csv(&args.input)?;
    let (kept, dropped) = filter_by_duration(responses, args.min_s, args.max_s)?;

    ensure_out_dir(&args.out)?;
    let out_path = args.out.join("filtered.csv");
    write_survey_csv(&kept, &out_path)?;

    let mut manifest = RunManifest::new("filter");
    manifest
        .input(&args.input)
        .output(&out_path)
        .note("min_s", args.min_s)
        .note("max_s", args.max_s)
        .note("rows_accepted", parse_report.accepted)
        .note("rows_rejected", parse_report.rejected.len())
        .note("kept", kept.len())
        .note("dropped", dropped);
    manifest.write(&args.out, started)?;
    Ok(())
}

#[derive(Debug, Args)]
struct InterpolateArgs {
    /// Dataset CSV to inflate.
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Size multiplier; per-level counts scale exactly by this.
    #[arg(long, default_value_t = 10)]
    factor: usize,
    /// Interpolation seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (interpolated.csv, manifest.json).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

fn cmd_interpolate(args: InterpolateArgs) -> CmdResult {
    let started = Instant::now();
    let dataset = Dataset::from_csv(&args.input)?;
    let inflated = interpolate(&dataset, args.factor, args.seed)?;

    ensure_out_dir(&args.out)?;
    let out_path = args.out.join("interpolated.csv");
    inflated.to_csv(&out_path)?;

    let mut manifest = RunManifest::new("interpolate");
    manifest
        .seed(args.seed)
        .input(&args.input)
        .output(&out_path)
        .note("factor", args.factor)
        .note("input_samples", dataset.len())
        .note("output_samples", inflated.len());
    manifest.write(&args.out, started)?;
    Ok(())
}

/// Experiment config plus the flag overrides shared by train, ablate, and
/// benchmark.
#[derive(Debug, Args)]
struct ExperimentOpts {
    /// Experiment config JSON (hidden layers, training, split); flags
    /// override its fields.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Training seed override (initialization, shuffling, dropout).
    #[arg(long)]
    seed: Option<u64>,
    /// Epoch budget override.
    #[arg(long)]
    epochs: Option<usize>,
    /// Cost threshold override; 0 disables early stopping.
    #[arg(long)]
    tau: Option<f64>,
    /// Train fraction override.
    #[arg(long)]
    split: Option<f64>,
    /// Split shuffle seed override.
    #[arg(long)]
    split_seed: Option<u64>,
    /// Hidden layer widths override, comma separated.
    #[arg(long, value_delimiter = ',', value_name = "W1,W2,...")]
    hidden: Option<Vec<usize>>,
}

impl ExperimentOpts {
    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg: ExperimentConfig = match &self.config {
            Some(path) => from_json(read_json(path)?, "experiment config")?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.train.seed = seed;
        }
        if let Some(epochs) = self.epochs {
            cfg.train.max_epochs = epochs;
        }
        if let Some(tau) = self.tau {
            cfg.train.tau = tau;
        }
        if let Some(split) = self.split {
            cfg.split_fraction = split;
        }
        if let Some(split_seed) = self.split_seed {
            cfg.split_seed = split_seed;
        }
        if let Some(hidden) = &self.hidden {
            cfg.hidden_layers = hidden.clone();
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Labeled dataset CSV.
    #[arg(long, value_name = "PATH")]
    dataset: PathBuf,
    #[command(flatten)]
    experiment: ExperimentOpts,
    /// Output directory (model.json, loss_history.csv, the partitions,
    /// manifest.json).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

fn cmd_train(args: TrainArgs) -> CmdResult {
    let started = Instant::now();
    let cfg = args.experiment.resolve()?;

    // --split values ≥ 1 train on the whole dataset without a holdout;
    // anything below goes through the stratified split.
    let holdout = cfg.split_fraction < 1.0;
    if holdout {
        cfg.validate()?;
    } else {
        if cfg.hidden_layers.is_empty() || cfg.hidden_layers.contains(&0) {
            return Err(CliError::Usage(
                "hidden_layers must be non-empty with positive widths".to_string(),
            ));
        }
        cfg.train.validate()?;
    }

    let dataset = Dataset::from_csv(&args.dataset)?;
    ensure_out_dir(&args.out)?;

    let mut manifest = RunManifest::new("train");
    manifest
        .config(args.experiment.config.as_deref())
        .seed(cfg.train.seed)
        .input(&args.dataset);

    let train_ds = if holdout {
        let (train_ds, test_ds) = split(&dataset, cfg.split_fraction, cfg.split_seed)?;
        let train_path = args.out.join("train.csv");
        let test_path = args.out.join("test.csv");
        train_ds.to_csv(&train_path)?;
        test_ds.to_csv(&test_path)?;
        manifest
            .output(&train_path)
            .output(&test_path)
            .note("split_fraction", cfg.split_fraction)
            .note("split_seed", cfg.split_seed)
            .note("test_size", test_ds.len());
        train_ds
    } else {
        manifest.note("test_size", 0);
        dataset
    };

    let train_set = train_ds.to_labeled()?;
    let mut layer_sizes = Vec::with_capacity(cfg.hidden_layers.len() + 2);
    layer_sizes.push(train_set.arity());
    layer_sizes.extend_from_slice(&cfg.hidden_layers);
    layer_sizes.push(TRUST_LEVELS);

    let net = build_network(&layer_sizes, cfg.train.seed)?;
    let outcome = train(net, &train_set, &cfg.train)?;

    let mut network = outcome.network;
    network.metadata.epochs_run = outcome.epochs_run;
    network.metadata.final_cost = Some(outcome.final_cost);

    let model_path = args.out.join("model.json");
    let history_path = args.out.join("loss_history.csv");
    network.save(&model_path)?;
    write_loss_history(&outcome.loss_history, &history_path)?;

    manifest
        .output(&model_path)
        .output(&history_path)
        .note("layer_sizes", layer_sizes)
        .note("tau", cfg.train.tau)
        .note("epochs_run", outcome.epochs_run)
        .note("final_cost", outcome.final_cost)
        .note("train_size", train_set.len());
    manifest.write(&args.out, started)?;
    Ok(())
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("source").required(true))]
struct AssessArgs {
    /// Trained model JSON.
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    /// One feature vector, comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        value_name = "X1,X2,...",
        group = "source",
        allow_hyphen_values = true
    )]
    features: Option<Vec<f64>>,
    /// Headerless CSV of feature rows (one vector per row).
    #[arg(long, value_name = "PATH", group = "source")]
    input: Option<PathBuf>,
    /// Optional output directory (assessments.csv, manifest.json).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn cmd_assess(args: AssessArgs) -> CmdResult {
    let started = Instant::now();
    let net = Network::load(&args.model)?;

    let rows: Vec<Vec<f64>> = match (&args.features, &args.input) {
        (Some(features), None) => vec![features.clone()],
        (None, Some(path)) => read_feature_rows(path)?,
        _ => unreachable!("clap enforces exactly one source"),
    };

    // Assess everything up front so a bad row exits 2 with no partial
    // output.
    let assessments = rows
        .iter()
        .map(|row| net.assess(row))
        .collect::<iottrust::Result<Vec<Assessment>>>()?;

    // Artifacts land before the console report so `… | head` cannot
    // truncate them.
    if let Some(out) = &args.out {
        ensure_out_dir(out)?;
        let out_path = out.join("assessments.csv");
        write_assessments_csv(&assessments, &out_path)?;
        let mut manifest = RunManifest::new("assess");
        manifest.input(&args.model);
        if let Some(input) = &args.input {
            manifest.input(input);
        }
        manifest.output(&out_path).note("rows", assessments.len());
        manifest.write(out, started)?;
    }

    match print_assessments(&assessments) {
        // The consumer hanging up (`head`, a pager) is not our error.
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn print_assessments(assessments: &[Assessment]) -> std::io::Result<()> {
    let mut stdout = std::io::stdout().lock();
    for a in assessments {
        write!(stdout, "{} {:.4}", a.level, a.confidence)?;
        for p in &a.probabilities {
            write!(stdout, " {p:.6}")?;
        }
        writeln!(stdout)?;
    }
    Ok(())
}

#[derive(Debug, Args)]
struct SignificanceArgs {
    /// Trained model JSON.
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    /// Dataset CSV whose inputs the sensitivities average over.
    #[arg(long, value_name = "PATH")]
    dataset: PathBuf,
    /// Record attributes with max significance ≥ this threshold in the
    /// manifest (falls back to the single best attribute).
    #[arg(long, value_name = "T")]
    prune_threshold: Option<f64>,
    /// Output directory (significance.csv, significance.json,
    /// manifest.json).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

fn cmd_significance(args: SignificanceArgs) -> CmdResult {
    let started = Instant::now();
    let net = Network::load(&args.model)?;
    let dataset = Dataset::from_csv(&args.dataset)?;
    let inputs: Vec<Vec<f64>> = dataset
        .samples()
        .iter()
        .map(|s| s.features.clone())
        .collect();
    let report = attribute_significance(&net, &inputs, dataset.feature_names())?;

    ensure_out_dir(&args.out)?;
    let csv_path = args.out.join("significance.csv");
    let json_path = args.out.join("significance.json");
    write_significance_csv(&report, &csv_path)?;
    write_json(&report, &json_path)?;

    let mut manifest = RunManifest::new("significance");
    manifest
        .input(&args.model)
        .input(&args.dataset)
        .output(&csv_path)
        .output(&json_path)
        .note("samples", report.samples);
    if let Some(threshold) = args.prune_threshold {
        let retained = prune_attributes(&report, threshold);
        let names: Vec<String> = retained
            .iter()
            .map(|&i| report.attributes[i].name.to_string())
            .collect();
        manifest
            .note("prune_threshold", threshold)
            .note("retained_indices", retained)
            .note("retained_attributes", names);
    }
    manifest.write(&args.out, started)?;
    Ok(())
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Trained model JSON.
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    /// Labeled dataset CSV to score against.
    #[arg(long, value_name = "PATH")]
    dataset: PathBuf,
    /// Output directory (metrics.csv, metrics.json, manifest.json).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

fn cmd_evaluate(args: EvaluateArgs) -> CmdResult {
    let started = Instant::now();
    let net = Network::load(&args.model)?;
    let dataset = Dataset::from_csv(&args.dataset)?;
    let set = dataset.to_labeled()?;
    let report = evaluate_model(&net, &set)?;

    ensure_out_dir(&args.out)?;
    let csv_path = args.out.join("metrics.csv");
    let json_path = args.out.join("metrics.json");
    report.write_csv(&csv_path)?;
    write_json(&report, &json_path)?;

    let mut manifest = RunManifest::new("evaluate");
    manifest
        .input(&args.model)
        .input(&args.dataset)
        .output(&csv_path)
        .output(&json_path)
        .note("samples", report.samples)
        .note("macro_accuracy", report.macro_accuracy)
        .note("micro_accuracy", report.micro_accuracy);
    manifest.write(&args.out, started)?;
    Ok(())
}

#[derive(Debug, Args)]
struct AblateArgs {
    /// Labeled dataset CSV.
    #[arg(long, value_name = "PATH")]
    dataset: PathBuf,
    #[command(flatten)]
    experiment: ExperimentOpts,
    /// Output directory (per-run metrics CSVs, ablation.json,
    /// manifest.json).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

fn cmd_ablate(args: AblateArgs) -> CmdResult {
    let started = Instant::now();
    let cfg = args.experiment.resolve()?;
    let dataset = Dataset::from_csv(&args.dataset)?;
    let report = ablate_by_perspective(&dataset, &cfg)?;

    ensure_out_dir(&args.out)?;
    let mut manifest = RunManifest::new("ablate");
    manifest
        .config(args.experiment.config.as_deref())
        .seed(cfg.train.seed)
        .input(&args.dataset);

    let mut accuracies = serde_json::Map::new();
    for run in &report.runs {
        let path = args.out.join(format!("{}.csv", run.label));
        run.metrics.write_csv(&path)?;
        manifest.output(&path);
        accuracies.insert(run.label.clone(), run.metrics.macro_accuracy.into());
    }
    let json_path = args.out.join("ablation.json");
    write_json(&report, &json_path)?;
    manifest
        .output(&json_path)
        .note("macro_accuracy", accuracies)
        .note("train_size", report.train_size)
        .note("test_size", report.test_size);
    manifest.write(&args.out, started)?;
    Ok(())
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    /// Labeled dataset CSV.
    #[arg(long, value_name = "PATH")]
    dataset: PathBuf,
    #[command(flatten)]
    experiment: ExperimentOpts,
    /// Epoch checkpoints, comma separated (≥ 3, strictly increasing).
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "10,50,100,200,500",
        value_name = "E1,E2,..."
    )]
    points: Vec<usize>,
    /// Also trace the confidence curve over the same checkpoints.
    #[arg(long)]
    confidence: bool,
    /// Output directory (timing.csv, timing.json, optional confidence.csv,
    /// manifest.json).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

fn cmd_benchmark(args: BenchmarkArgs) -> CmdResult {
    let started = Instant::now();
    let cfg = args.experiment.resolve()?;
    let dataset = Dataset::from_csv(&args.dataset)?;
    let report = timing_benchmark(&dataset, &cfg, &args.points)?;

    ensure_out_dir(&args.out)?;
    let csv_path = args.out.join("timing.csv");
    let json_path = args.out.join("timing.json");
    write_timing_csv(&report, &csv_path)?;
    write_json(&report, &json_path)?;

    let mut manifest = RunManifest::new("benchmark");
    manifest
        .config(args.experiment.config.as_deref())
        .seed(cfg.train.seed)
        .input(&args.dataset)
        .output(&csv_path)
        .output(&json_path)
        .note("points", args.points.clone())
        .note("slope", report.slope)
        .note("intercept", report.intercept)
        .note("r_squared", report.r_squared);

    if args.confidence {
        let curve = confidence_curve(&dataset, &cfg, &args.points)?;
        let curve_path = args.out.join("confidence.csv");
        write_confidence_csv(&curve, &curve_path)?;
        manifest.output(&curve_path);
    }
    manifest.write(&args.out, started)?;
    Ok(())
}

fn read_json(path: &Path) -> Result<serde_json::Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn from_json<T: DeserializeOwned>(value: serde_json::Value, what: &str) -> Result<T, CliError> {
    serde_json::from_value(value).map_err(|e| CliError::Usage(format!("{what}: {e}")))
}

fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    std::fs::write(path, json).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok(())
}

fn write_loss_history(history: &[f64], path: &Path) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["epoch", "cost"])?;
    for (epoch, cost) in history.iter().enumerate() {
        writer.write_record([(epoch + 1).to_string(), cost.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}

fn read_feature_rows(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(record.len());
        for field in record.iter() {
            let value: f64 = field.parse().map_err(|_| {
                CliError::Usage(format!(
                    "{}: row {}: `{field}` is not a number",
                    path.display(),
                    i + 1
                ))
            })?;
            row.push(value);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Usage(format!(
            "{}: no feature rows",
            path.display()
        )));
    }
    Ok(rows)
}

fn write_assessments_csv(assessments: &[Assessment], path: &Path) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["level", "confidence", "p0", "p1", "p2", "p3", "p4"])?;
    for a in assessments {
        let mut record = vec![a.level.to_string(), a.confidence.to_string()];
        record.extend(a.probabilities.iter().map(|p| p.to_string()));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

fn write_significance_csv(report: &SignificanceReport, path: &Path) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record([
        "attribute",
        "perspective",
        "level_0",
        "level_1",
        "level_2",
        "level_3",
        "level_4",
        "max",
    ])?;
    for attr in &report.attributes {
        let mut record = vec![attr.name.to_string(), attr.name.perspective.to_string()];
        record.extend(attr.per_level.iter().map(|v| v.to_string()));
        record.push(attr.max_over_levels.to_string());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}
