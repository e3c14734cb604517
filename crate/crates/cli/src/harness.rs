//! Seeded evaluation runs over a dataset split.

use std::collections::BTreeMap;
use std::sync::Arc;

use groundplan::example_store::stub_corpus;
use groundplan::lm::{BackendKind, DiskCache, GatewayConfig, Memoized, RemoteBackend, RemoteConfig, StubBackend};
use groundplan::metrics::{aggregate, evaluate_record, Aggregate, EvalResult};
use groundplan::planner::{BindingMode, Termination};
use groundplan::prompt::PromptLayout;
use groundplan::{ExampleRecord, LanguageModel, Planner, PlannerConfig, TemplateRegistry};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::CliError;

pub const BASE_URL_VAR: &str = "GROUNDPLAN_BASE_URL";
pub const API_KEY_VAR: &str = "GROUNDPLAN_API_KEY";

/// Builds the configured backend. The stub samples from the example plans.
pub fn build_backend(config: &GatewayConfig, examples: &[ExampleRecord]) -> Result<Arc<dyn LanguageModel>, CliError> {
    match config.kind {
        BackendKind::Stub => Ok(Arc::new(Memoized::new(StubBackend::new(stub_corpus(examples))))),
        BackendKind::Remote => {
            let base_url = std::env::var(BASE_URL_VAR)
                .ok()
                .or_else(|| config.base_url.clone())
                .ok_or_else(|| CliError::Usage(format!("remote backend needs {BASE_URL_VAR} or backend.base_url")))?;
            let remote = RemoteConfig {
                api_key: std::env::var(API_KEY_VAR).ok(),
                planning_model: config.planning_model.clone(),
                translation_model: config.translation_model.clone(),
                timeout_secs: config.timeout_secs,
                retries: config.retries,
                ..RemoteConfig::new(base_url)
            };
            let cache = config.cache_dir.as_ref().map(DiskCache::open).transpose()?;
            Ok(Arc::new(Memoized::new(RemoteBackend::new(remote, cache))))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Ours,
    Baseline,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Ours => "Ours",
            Mode::Baseline => "Baseline",
        }
    }

    /// The planner settings for this mode, starting from a user config.
    pub fn config(self, base: &PlannerConfig) -> PlannerConfig {
        match self {
            Mode::Ours => base.clone(),
            Mode::Baseline => {
                let b = PlannerConfig::baseline();
                PlannerConfig {
                    w_s: b.w_s,
                    w_o: b.w_o,
                    w_om: b.w_om,
                    w_od: b.w_od,
                    pair_repeat_penalty: b.pair_repeat_penalty,
                    binding: b.binding,
                    ..base.clone()
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RunOptions {
    pub runs: usize,
    /// Repeated random bindings per run, used only with random binding.
    pub subruns: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { runs: 5, subruns: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordOutcome {
    pub run: usize,
    pub subrun: usize,
    pub task: String,
    pub source_line: usize,
    pub plan: Vec<String>,
    pub termination: Termination,
    pub result: EvalResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeReport {
    pub label: String,
    pub config: PlannerConfig,
    /// Mean over records, one entry per run.
    pub runs: Vec<EvalResult>,
    /// Mean and standard deviation over runs.
    pub summary: Aggregate,
    pub records: Vec<RecordOutcome>,
}

pub struct Evaluator<'a> {
    pub lm: &'a dyn LanguageModel,
    pub registry: &'a TemplateRegistry,
    pub layout: &'a PromptLayout,
    pub examples: &'a [ExampleRecord],
}

/// Record indices grouped by task, in first-appearance order.
fn task_groups(records: &[ExampleRecord]) -> Vec<Vec<usize>> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let g = groups.entry(r.task.as_str()).or_default();
        if g.is_empty() {
            order.push(&r.task);
        }
        g.push(i);
    }
    order.into_iter().map(|t| groups.remove(t).unwrap_or_default()).collect()
}

fn mean_result(results: &[EvalResult]) -> Result<EvalResult, CliError> {
    Ok(aggregate(results)?.mean)
}

impl Evaluator<'_> {
    /// Plans every task once per run (with one randomly chosen record per
    /// task) and scores the plans. Run `r` uses seed `config.seed + r`.
    pub fn evaluate(
        &self,
        label: &str,
        records: &[ExampleRecord],
        config: &PlannerConfig,
        options: RunOptions,
    ) -> Result<ModeReport, CliError> {
        config.validate()?;
        if records.is_empty() || options.runs == 0 {
            return Err(CliError::Usage("nothing to evaluate: empty split or zero runs".into()));
        }
        let subruns = match config.binding {
            BindingMode::RandomSameName => options.subruns.max(1),
            BindingMode::Scored => 1,
        };
        let groups = task_groups(records);
        let mut jobs = Vec::new();
        for run in 0..options.runs {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(run as u64));
            for group in &groups {
                let pick = group[rng.gen_range(0..group.len())];
                for subrun in 0..subruns {
                    jobs.push((run, pick, subrun));
                }
            }
        }

        let outcomes = jobs
            .par_iter()
            .map(|&(run, index, subrun)| self.plan_and_score(&records[index], config, run, subrun))
            .collect::<Result<Vec<_>, _>>()?;

        let mut runs = Vec::with_capacity(options.runs);
        for run_outcomes in outcomes.chunks(groups.len() * subruns) {
            let per_record = run_outcomes
                .chunks(subruns)
                .map(|subs| mean_result(&subs.iter().map(|o| o.result).collect::<Vec<_>>()))
                .collect::<Result<Vec<_>, _>>()?;
            runs.push(mean_result(&per_record)?);
        }
        let summary = aggregate(&runs)?;
        if !summary.mean.in_range() {
            return Err(CliError::Invariant(format!("{label}: metric out of range: {:?}", summary.mean)));
        }
        Ok(ModeReport {
            label: label.to_string(),
            config: config.clone(),
            runs,
            summary,
            records: outcomes,
        })
    }

    fn plan_and_score(
        &self,
        record: &ExampleRecord,
        config: &PlannerConfig,
        run: usize,
        subrun: usize,
    ) -> Result<RecordOutcome, CliError> {
        let config = PlannerConfig {
            seed: config.seed.wrapping_add(run as u64),
            binding_seed: subrun as u64,
            ..config.clone()
        };
        let planner = Planner::new(self.lm, self.registry, self.layout, &config);
        let (plan, log) = planner.generate_plan(&record.task, &record.env_before, self.examples)?;
        let evaluation = evaluate_record(&plan, record)?;
        log::debug!("run {run}.{subrun} {:?}: {} steps, {:?}", record.task, plan.len(), log.termination);
        Ok(RecordOutcome {
            run,
            subrun,
            task: record.task.clone(),
            source_line: record.source_line,
            plan: plan.steps.iter().map(|s| s.to_string()).collect(),
            termination: log.termination,
            result: evaluation.result,
        })
    }
}
