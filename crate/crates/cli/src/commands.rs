//! The `generate`, `evaluate` and `ablate` subcommands.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use groundplan::example_store::load_records;
use groundplan::prompt::PromptLayout;
use groundplan::{DatasetSplit, EnvironmentGraph, ExampleRecord, Planner, TemplateRegistry};
use serde::Serialize;

use crate::ablate::{grid_csv, parse_grid, score_ablation_preset, GridPoint};
use crate::config::{apply_overrides, RunConfig};
use crate::error::CliError;
use crate::harness::{build_backend, Evaluator, Mode, ModeReport, RunOptions};
use crate::report::{table, to_json, unix_now, write_atomic, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "groundplan", version, about = "Grounded task planning with language models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate one grounded plan for a task in a scene.
    Generate(GenerateArgs),
    /// Evaluate ours and/or baseline mode over a dataset split.
    Evaluate(EvaluateArgs),
    /// Evaluate every point of a config grid.
    Ablate(AblateArgs),
}

/// Options shared by every command.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML run config with `[planner]` and `[backend]` tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `planner.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override any planner field, e.g. `--set w_s=0`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Action template registry JSON; the built-in one by default.
    #[arg(long)]
    pub registry: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub task: String,
    /// Scene graph JSON.
    #[arg(long)]
    pub env: PathBuf,
    /// Example records (JSONL).
    #[arg(long)]
    pub examples: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeChoice {
    Ours,
    Baseline,
    Both,
}

impl ModeChoice {
    fn modes(self) -> Vec<Mode> {
        match self {
            ModeChoice::Ours => vec![Mode::Ours],
            ModeChoice::Baseline => vec![Mode::Baseline],
            ModeChoice::Both => vec![Mode::Baseline, Mode::Ours],
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Directory with examples.jsonl and optional validation.jsonl and test.jsonl.
    #[arg(long, default_value = "fixtures")]
    pub data: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    /// Repeated random bindings per run in baseline mode.
    #[arg(long, default_value_t = 3)]
    pub subruns: usize,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "test")]
    pub dataset_split: String,
    #[arg(long, value_enum, default_value_t = ModeChoice::Both)]
    pub mode: ModeChoice,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Full method, w/o scene score, w/o object score, baseline scores.
    ScoreAblation,
}

#[derive(Debug, Clone, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "validation")]
    pub dataset_split: String,
    /// Grid TOML with `[[arm]]` points and/or a `[grid]` table of lists.
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    pub sweep: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(args) => generate(&args).map(|_| ()),
        Command::Evaluate(args) => evaluate(&args).map(|t| print!("{t}")),
        Command::Ablate(args) => ablate(&args).map(|csv| print!("{csv}")),
    }
}

fn load_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut config = RunConfig::load_or_default(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        config.planner.seed = seed;
    }
    config.planner = apply_overrides(&config.planner, &common.overrides)?;
    Ok(config)
}

fn load_registry(common: &CommonArgs) -> Result<TemplateRegistry, CliError> {
    match &common.registry {
        Some(path) => TemplateRegistry::load(path).map_err(|e| CliError::input(path, e)),
        None => Ok(TemplateRegistry::builtin()),
    }
}

fn config_inputs(common: &CommonArgs) -> Vec<PathBuf> {
    common.config.iter().chain(&common.registry).cloned().collect()
}

fn config_json(config: &RunConfig) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(config).map_err(|e| CliError::Invariant(e.to_string()))
}

/// Writes `plan.txt`, `session.json` and `manifest.json` under `--out`.
pub fn generate(args: &GenerateArgs) -> Result<groundplan::Plan, CliError> {
    let started = unix_now();
    let config = load_config(&args.common)?;
    let registry = load_registry(&args.common)?;
    let env = EnvironmentGraph::load(&args.env).map_err(|e| CliError::input(&args.env, e))?;
    let examples = load_records(&args.examples, &registry).map_err(|e| CliError::input(&args.examples, e))?;
    let lm = build_backend(&config.backend, &examples)?;
    let layout = PromptLayout::default();
    let planner = Planner::new(lm.as_ref(), &registry, &layout, &config.planner);
    let (plan, log) = planner.generate_plan(&args.task, &env, &examples)?;

    let text = plan.to_file_string().map_err(|e| CliError::Invariant(e.to_string()))?;
    write_atomic(&args.out.join("plan.txt"), text.as_bytes())?;
    write_atomic(&args.out.join("session.json"), log.to_json().as_bytes())?;
    let mut inputs = vec![args.env.clone(), args.examples.clone()];
    inputs.extend(config_inputs(&args.common));
    let manifest = RunManifest::new(
        &format!("generate --task {:?}", args.task),
        config.planner.seed,
        config_json(&config)?,
        inputs,
        lm.id(),
        started,
    )?;
    write_atomic(&args.out.join("manifest.json"), to_json(&manifest)?.as_bytes())?;
    Ok(plan)
}

struct Loaded {
    config: RunConfig,
    registry: TemplateRegistry,
    split: DatasetSplit,
    records: Vec<ExampleRecord>,
    inputs: Vec<PathBuf>,
}

fn load_split(data: &DataArgs, split_name: &str, common: &CommonArgs) -> Result<Loaded, CliError> {
    let config = load_config(common)?;
    let registry = load_registry(common)?;
    let split = DatasetSplit::load_dir(&data.data, &registry).map_err(|e| CliError::input(&data.data, e))?;
    split.check_disjoint().map_err(|e| CliError::input(&data.data, e))?;
    let records = split
        .partition(split_name)
        .ok_or_else(|| CliError::Usage(format!("unknown split {split_name:?}")))?
        .to_vec();
    if records.is_empty() {
        return Err(CliError::input(&data.data, format!("split {split_name:?} is empty")));
    }
    let mut inputs: Vec<PathBuf> = ["examples.jsonl", "validation.jsonl", "test.jsonl"]
        .iter()
        .map(|f| data.data.join(f))
        .filter(|p| p.exists())
        .collect();
    inputs.extend(config_inputs(common));
    Ok(Loaded {
        config,
        registry,
        split,
        records,
        inputs,
    })
}

#[derive(Serialize)]
struct EvaluationReport<'a> {
    split: &'a str,
    options: RunOptions,
    modes: &'a [ModeReport],
}

fn run_options(data: &DataArgs) -> RunOptions {
    RunOptions {
        runs: data.runs,
        subruns: data.subruns,
    }
}

/// Writes `report.json`, `table.txt` and `manifest.json` under `--out` and
/// returns the table text.
pub fn evaluate(args: &EvaluateArgs) -> Result<String, CliError> {
    let started = unix_now();
    let loaded = load_split(&args.data, &args.dataset_split, &args.common)?;
    let lm = build_backend(&loaded.config.backend, &loaded.split.examples)?;
    let layout = PromptLayout::default();
    let evaluator = Evaluator {
        lm: lm.as_ref(),
        registry: &loaded.registry,
        layout: &layout,
        examples: &loaded.split.examples,
    };
    let options = run_options(&args.data);
    let modes = args
        .mode
        .modes()
        .into_iter()
        .map(|m| evaluator.evaluate(m.label(), &loaded.records, &m.config(&loaded.config.planner), options))
        .collect::<Result<Vec<_>, _>>()?;

    let report = EvaluationReport {
        split: &args.dataset_split,
        options,
        modes: &modes,
    };
    let text = table(&modes);
    write_atomic(&args.out.join("report.json"), to_json(&report)?.as_bytes())?;
    write_atomic(&args.out.join("table.txt"), text.as_bytes())?;
    write_manifest(&args.out, "evaluate", &args.dataset_split, &loaded, lm.id(), started)?;
    Ok(text)
}

fn write_manifest(out: &Path, command: &str, split: &str, loaded: &Loaded, backend: String, started: u64) -> Result<(), CliError> {
    let manifest = RunManifest::new(
        &format!("{command} --dataset-split {split}"),
        loaded.config.planner.seed,
        config_json(&loaded.config)?,
        loaded.inputs.clone(),
        backend,
        started,
    )?;
    write_atomic(&out.join("manifest.json"), to_json(&manifest)?.as_bytes())
}

pub fn grid_points(args: &AblateArgs) -> Result<Vec<GridPoint>, CliError> {
    match (&args.sweep, args.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
            parse_grid(&text).map_err(|e| CliError::input(path, e))
        }
        (None, Some(Preset::ScoreAblation)) => Ok(score_ablation_preset()),
        (None, None) => Err(CliError::Usage("ablate needs --sweep or --preset".into())),
    }
}

/// Writes `ablation.csv`, `ablation.json` and `manifest.json` under `--out`
/// and returns the CSV text.
pub fn ablate(args: &AblateArgs) -> Result<String, CliError> {
    let started = unix_now();
    let points = grid_points(args)?;
    let loaded = load_split(&args.data, &args.dataset_split, &args.common)?;
    let lm = build_backend(&loaded.config.backend, &loaded.split.examples)?;
    let layout = PromptLayout::default();
    let evaluator = Evaluator {
        lm: lm.as_ref(),
        registry: &loaded.registry,
        layout: &layout,
        examples: &loaded.split.examples,
    };
    let options = run_options(&args.data);
    let mut reports = Vec::with_capacity(points.len());
    for point in &points {
        let config = point.apply(&loaded.config.planner)?;
        reports.push(evaluator.evaluate(&point.name, &loaded.records, &config, options)?);
    }
    let csv = grid_csv(&points, &reports)?;
    let report = EvaluationReport {
        split: &args.dataset_split,
        options,
        modes: &reports,
    };
    write_atomic(&args.out.join("ablation.csv"), csv.as_bytes())?;
    write_atomic(&args.out.join("ablation.json"), to_json(&report)?.as_bytes())?;
    write_manifest(&args.out, "ablate", &args.dataset_split, &loaded, lm.id(), started)?;
    Ok(csv)
}
