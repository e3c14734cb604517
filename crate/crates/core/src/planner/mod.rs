//! Autoregressive plan generation: sample step candidates from the planning
//! model, ground them in the scene, rank them and append the best.

pub mod grounding;
pub mod scoring;

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::env_graph::{EnvironmentGraph, NodeId};
use crate::example_store::{build_prompts, select_example, ExampleRecord, Prompts, StoreError};
use crate::lm::{LanguageModel, LmError, SampleRequest};
use crate::prompt::PromptLayout;
use crate::script::{display_name, normalize_name, render_nl, ActionStep, Plan, TemplateRegistry};

pub use grounding::{
    candidate_bindings, match_action, match_objects, ActionMatch, Binding, ObjectMatch, PositionOverlay,
};
pub use scoring::{
    action_repetition_penalty, argmax, disambiguation_from_distance, disambiguation_score, object_relevance,
    pair_repetition_penalty, Components, Weights,
};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("invalid planner config: {0}")]
    Config(String),
    #[error("scene has no objects to ground actions in")]
    EmptyEnvironment,
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

/// How a sample's per-token log-probabilities become one score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogprobAggregation {
    Mean,
    Sum,
}

/// How object names are bound to scene nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BindingMode {
    /// Match names to categories by embedding and rank every node binding.
    Scored,
    /// Bind each name to a seeded random node of exactly that category,
    /// fixed for the whole plan.
    RandomSameName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub w_s: f64,
    pub w_a: f64,
    pub w_am: f64,
    pub w_o: f64,
    pub w_om: f64,
    pub w_od: f64,
    pub k: usize,
    pub n_e: usize,
    pub cutoff: f64,
    pub action_repeat_penalty: f64,
    pub pair_repeat_penalty: f64,
    pub max_steps: usize,
    pub temperature: f64,
    pub seed: u64,
    pub logprob_aggregation: LogprobAggregation,
    pub binding: BindingMode,
    pub max_bindings: usize,
    /// Extra seed for random same-name binding, so repeated bindings of one
    /// sampled plan can be drawn without changing the samples.
    pub binding_seed: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            w_s: 0.5,
            w_a: 1.0,
            w_am: 3.0,
            w_o: 1.0,
            w_om: 3.0,
            w_od: 1.0,
            k: 10,
            n_e: 10,
            cutoff: 0.0,
            action_repeat_penalty: 0.3,
            pair_repeat_penalty: 0.5,
            max_steps: 20,
            temperature: 0.8,
            seed: 0,
            logprob_aggregation: LogprobAggregation::Mean,
            binding: BindingMode::Scored,
            max_bindings: 64,
            binding_seed: 0,
        }
    }
}

impl PlannerConfig {
    /// Environment-unaware scoring: no scene score, no object scores, random
    /// same-name binding.
    pub fn baseline() -> Self {
        PlannerConfig {
            w_s: 0.0,
            w_o: 0.0,
            w_om: 0.0,
            w_od: 0.0,
            pair_repeat_penalty: 0.0,
            binding: BindingMode::RandomSameName,
            ..PlannerConfig::default()
        }
    }

    pub fn weights(&self) -> Weights<f64> {
        Weights {
            w_a: self.w_a,
            w_am: self.w_am,
            w_o: self.w_o,
            w_om: self.w_om,
            w_od: self.w_od,
            action_repeat: self.action_repeat_penalty,
            pair_repeat: self.pair_repeat_penalty,
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        let nonneg = [
            ("w_s", self.w_s),
            ("w_a", self.w_a),
            ("w_am", self.w_am),
            ("w_o", self.w_o),
            ("w_om", self.w_om),
            ("w_od", self.w_od),
            ("action_repeat_penalty", self.action_repeat_penalty),
            ("pair_repeat_penalty", self.pair_repeat_penalty),
        ];
        for (name, v) in nonneg {
            if !v.is_finite() || v < 0.0 {
                return Err(PlanError::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.cutoff.is_nan() {
            return Err(PlanError::Config("cutoff is NaN".into()));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(PlanError::Config(format!("temperature must be > 0, got {}", self.temperature)));
        }
        for (name, v) in [("k", self.k), ("n_e", self.n_e), ("max_steps", self.max_steps), ("max_bindings", self.max_bindings)] {
            if v == 0 {
                return Err(PlanError::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

/// A grounded candidate step with its component scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub step: ActionStep,
    pub sample_index: usize,
    pub scores: Components<f64>,
    pub penalty: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleLog {
    pub text: String,
    pub mean_logprob: f64,
    pub null: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateLog {
    pub sample_index: usize,
    pub step: String,
    #[serde(flatten)]
    pub scores: Components<f64>,
    pub penalty: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepLog {
    pub step_number: usize,
    pub samples: Vec<SampleLog>,
    pub candidates: Vec<CandidateLog>,
    pub chosen: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    BelowCutoff,
    NullMajority,
    NoCandidates,
    MaxSteps,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionLog {
    pub query_task: String,
    pub example_index: usize,
    pub example_task: String,
    pub task_similarity: f64,
    pub scene_similarity: f64,
    pub action_prompt: String,
    pub object_prompt: String,
    pub steps: Vec<StepLog>,
    pub termination: Termination,
}

impl SessionLog {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("session log serializes")
    }
}

/// Mutable state of one planning session.
struct Session<'e> {
    env: &'e EnvironmentGraph,
    prompts: Prompts,
    plan: Plan,
    rng: ChaCha8Rng,
    fixed_bindings: HashMap<String, NodeId>,
    positions: PositionOverlay,
}

pub struct Planner<'a> {
    pub lm: &'a dyn LanguageModel,
    pub registry: &'a TemplateRegistry,
    pub layout: &'a PromptLayout,
    pub config: &'a PlannerConfig,
}

impl<'a> Planner<'a> {
    pub fn new(
        lm: &'a dyn LanguageModel,
        registry: &'a TemplateRegistry,
        layout: &'a PromptLayout,
        config: &'a PlannerConfig,
    ) -> Self {
        Planner {
            lm,
            registry,
            layout,
            config,
        }
    }

    pub fn generate_plan(
        &self,
        query_task: &str,
        query_env: &EnvironmentGraph,
        store: &[ExampleRecord],
    ) -> Result<(Plan, SessionLog), PlanError> {
        self.config.validate()?;
        let selection = select_example(self.lm, query_task, query_env, store, self.config.n_e, self.config.w_s)?;
        let example = &store[selection.index];
        let prompts = build_prompts(example, query_task, self.layout);
        let mut log = SessionLog {
            query_task: query_task.to_string(),
            example_index: selection.index,
            example_task: example.task.clone(),
            task_similarity: selection.task_similarity,
            scene_similarity: selection.scene_similarity,
            action_prompt: prompts.action.clone(),
            object_prompt: prompts.objects.clone(),
            steps: Vec::new(),
            termination: Termination::MaxSteps,
        };
        let mut session = Session {
            env: query_env,
            prompts,
            plan: Plan::new(query_task),
            rng: ChaCha8Rng::seed_from_u64(mix_seed(self.config.seed, query_task) ^ self.config.binding_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            fixed_bindings: HashMap::new(),
            positions: PositionOverlay::default(),
        };

        while session.plan.len() < self.config.max_steps {
            let step_number = session.plan.len() + 1;
            let request = SampleRequest {
                prompt: format!("{}{}", session.prompts.action, self.layout.step_cue(step_number)),
                k: self.config.k,
                stop: "\n".into(),
                temperature: self.config.temperature,
                seed: self.config.seed,
            };
            let samples = self.lm.sample_continuations(&request)?;
            let mut matches = Vec::with_capacity(samples.len());
            let mut sample_logs = Vec::with_capacity(samples.len());
            for sample in &samples {
                let text = self.layout.strip_step_label(&sample.text);
                let m = match_action(self.lm, text, self.registry)?;
                sample_logs.push(SampleLog {
                    text: sample.text.clone(),
                    mean_logprob: sample.mean_logprob,
                    null: m.is_none(),
                });
                matches.push(m);
            }
            let nulls = matches.iter().filter(|m| m.is_none()).count();
            let mut step_log = StepLog {
                step_number,
                samples: sample_logs,
                candidates: Vec::new(),
                chosen: None,
            };
            if nulls * 2 > samples.len() {
                log.steps.push(step_log);
                log.termination = Termination::NullMajority;
                break;
            }

            let mut candidates = Vec::new();
            for (index, (sample, m)) in samples.iter().zip(&matches).enumerate() {
                let Some(m) = m else { continue };
                let p_a = match self.config.logprob_aggregation {
                    LogprobAggregation::Mean => sample.mean_logprob,
                    LogprobAggregation::Sum => sample.mean_logprob * sample.token_count as f64,
                };
                candidates.extend(self.ground(&mut session, index, p_a, m)?);
            }
            // stable: ties keep sample and binding enumeration order
            candidates.sort_by(|a, b| b.total.total_cmp(&a.total));
            step_log.candidates = candidates
                .iter()
                .map(|c| CandidateLog {
                    sample_index: c.sample_index,
                    step: c.step.to_string(),
                    scores: c.scores,
                    penalty: c.penalty,
                    total: c.total,
                })
                .collect();

            let Some(best) = candidates.into_iter().next() else {
                log.steps.push(step_log);
                log.termination = Termination::NoCandidates;
                break;
            };
            if best.total < self.config.cutoff {
                log.steps.push(step_log);
                log.termination = Termination::BelowCutoff;
                break;
            }
            step_log.chosen = Some(best.step.to_string());
            log.steps.push(step_log);
            session
                .prompts
                .action
                .push_str(&self.layout.step_line(step_number, &render_nl(&best.step)));
            for name in &best.step.object_names {
                let shown = display_name(name);
                if session.prompts.objects.is_empty() {
                    session.prompts.objects = shown;
                } else {
                    session.prompts.objects.push_str(", ");
                    session.prompts.objects.push_str(&shown);
                }
            }
            session.positions.apply(session.env, &best.step);
            session.plan.steps.push(best.step);
        }
        Ok((session.plan, log))
    }

    /// Expands one matched sample into scored, grounded candidates.
    fn ground(
        &self,
        session: &mut Session<'_>,
        sample_index: usize,
        p_a: f64,
        m: &ActionMatch,
    ) -> Result<Vec<ScoredCandidate>, PlanError> {
        let weights = self.config.weights();
        let template = m.step.template.clone();
        let mut out = Vec::new();
        let mut push = |step: ActionStep, scores: Components<f64>, plan: &Plan| -> Result<(), PlanError> {
            let penalty = weights.penalty(scoring::action_repeats(&step, plan), scoring::pair_repeats(&step, plan));
            let total = weights.total(&scores, penalty);
            let violations = scoring::range_violations(&scores, penalty, total, &weights);
            if !violations.is_empty() {
                return Err(PlanError::Invariant(format!("candidate {step}: {}", violations.join("; "))));
            }
            out.push(ScoredCandidate {
                step,
                sample_index,
                scores,
                penalty,
                total,
            });
            Ok(())
        };

        if template.arity == 0 {
            let step = ActionStep::grounded(template, Vec::new(), Vec::new());
            let scores = Components {
                p_a,
                p_am: m.p_am,
                ..Components::default()
            };
            push(step, scores, &session.plan)?;
            return Ok(out);
        }

        match self.config.binding {
            BindingMode::RandomSameName => {
                let names = m.step.object_names.clone();
                let ids = names.iter().map(|n| random_same_name(session, n)).collect();
                let step = ActionStep::grounded(template, names, ids);
                let scores = Components {
                    p_a,
                    p_am: m.p_am,
                    ..Components::default()
                };
                push(step, scores, &session.plan)?;
            }
            BindingMode::Scored => {
                let Some(objects) = match_objects(self.lm, &m.step.object_names, session.env)? else {
                    return Err(PlanError::EmptyEnvironment);
                };
                let p_om = objects.iter().map(|o| o.similarity).sum::<f64>() / objects.len() as f64;
                let mut p_o = 0.0;
                for o in &objects {
                    let shown = display_name(&o.category);
                    let continuation = if session.prompts.objects.is_empty() {
                        shown
                    } else {
                        format!(", {shown}")
                    };
                    let ppl = self.lm.perplexity(&session.prompts.objects, &continuation)?;
                    p_o += object_relevance(ppl);
                }
                p_o /= objects.len() as f64;

                let categories: Vec<String> = objects.iter().map(|o| o.category.clone()).collect();
                let previous = previous_nodes(session);
                let bindings = candidate_bindings(
                    session.env,
                    &session.positions,
                    &categories,
                    &previous,
                    self.config.max_bindings,
                );
                for binding in bindings {
                    let step = ActionStep::grounded(template.clone(), categories.clone(), binding.ids);
                    let scores = Components {
                        p_a,
                        p_am: m.p_am,
                        p_o,
                        p_om,
                        p_od: binding.p_od,
                    };
                    push(step, scores, &session.plan)?;
                }
            }
        }
        Ok(out)
    }
}

/// Nodes bound by the most recent step.
fn previous_nodes(session: &Session<'_>) -> Vec<NodeId> {
    session
        .plan
        .steps
        .last()
        .and_then(|s| s.object_ids.clone())
        .unwrap_or_default()
}

/// A node of exactly the named category, chosen once per name and reused.
/// Names with no such node bind to id 0, which never exists.
fn random_same_name(session: &mut Session<'_>, name: &str) -> NodeId {
    let key = normalize_name(name);
    if let Some(id) = session.fixed_bindings.get(&key) {
        return *id;
    }
    let nodes: Vec<NodeId> = session.env.nodes_of_category(&key).map(|n| n.id).collect();
    let id = if nodes.is_empty() {
        NodeId(0)
    } else {
        nodes[session.rng.gen_range(0..nodes.len())]
    };
    session.fixed_bindings.insert(key, id);
    id
}

fn mix_seed(seed: u64, task: &str) -> u64 {
    let digest = Sha256::digest(task.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    seed ^ u64::from_le_bytes(bytes)
}

#[cfg(test)]
mod tests;
