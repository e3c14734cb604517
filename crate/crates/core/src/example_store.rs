//! Example dataset loading and few-shot example selection.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::env_graph::{env_similarity, EnvironmentGraph};
use crate::executor::execute_plan;
use crate::lm::{cosine, LanguageModel, LmError, StubPlan};
use crate::prompt::PromptLayout;
use crate::scalar::Real;
use crate::script::{display_name, parse_script_line, render_nl, ParseError, Plan, TemplateRegistry};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("line {line}: {message}")]
    Json { line: usize, message: String },
    #[error("line {line}: plan step {step}: {source}")]
    Plan {
        line: usize,
        step: usize,
        source: ParseError,
    },
    #[error("line {line}: record has no environment")]
    MissingEnvironment { line: usize },
    #[error("task {0:?} appears in more than one split")]
    OverlappingSplits(String),
    #[error("example store is empty")]
    Empty,
    #[error("N_e must be at least 1")]
    ZeroPool,
    #[error(transparent)]
    Lm(#[from] LmError),
}

/// One dataset entry: a task, its annotated plan and the scene it runs in.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleRecord {
    pub task: String,
    pub description: Option<String>,
    pub plan: Plan,
    pub env_before: EnvironmentGraph,
    pub env_after: Option<EnvironmentGraph>,
    /// 1-based line of the dataset file the record came from. Records
    /// expanded from one multi-environment line share it.
    pub source_line: usize,
}

impl ExampleRecord {
    /// The annotated final scene, or the result of executing the plan.
    pub fn ground_truth_after(&self) -> EnvironmentGraph {
        match &self.env_after {
            Some(env) => env.clone(),
            None => execute_plan(&self.env_before, &self.plan).final_env,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnvironment {
    env_before: EnvironmentGraph,
    #[serde(default)]
    env_after: Option<EnvironmentGraph>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    task: String,
    #[serde(default)]
    description: Option<String>,
    plan: Vec<String>,
    #[serde(default)]
    env_before: Option<EnvironmentGraph>,
    #[serde(default)]
    env_after: Option<EnvironmentGraph>,
    #[serde(default)]
    environments: Vec<RawEnvironment>,
}

/// Parses JSON-lines records. Blank lines and `//` comment lines are skipped.
pub fn parse_records(text: &str, registry: &TemplateRegistry) -> Result<Vec<ExampleRecord>, StoreError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with("//") {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(trimmed).map_err(|e| StoreError::Json {
            line: line_no,
            message: e.to_string(),
        })?;
        let mut plan = Plan::new(&raw.task);
        for (s, step) in raw.plan.iter().enumerate() {
            plan.steps.push(parse_script_line(step, registry).map_err(|source| StoreError::Plan {
                line: line_no,
                step: s + 1,
                source,
            })?);
        }
        let mut envs: Vec<(EnvironmentGraph, Option<EnvironmentGraph>)> = Vec::new();
        if let Some(before) = raw.env_before {
            envs.push((before, raw.env_after));
        }
        envs.extend(raw.environments.into_iter().map(|e| (e.env_before, e.env_after)));
        if envs.is_empty() {
            return Err(StoreError::MissingEnvironment { line: line_no });
        }
        for (env_before, env_after) in envs {
            out.push(ExampleRecord {
                task: raw.task.clone(),
                description: raw.description.clone(),
                plan: plan.clone(),
                env_before,
                env_after,
                source_line: line_no,
            });
        }
    }
    Ok(out)
}

pub fn load_records(path: &Path, registry: &TemplateRegistry) -> Result<Vec<ExampleRecord>, StoreError> {
    let text = std::fs::read_to_string(path).map_err(|e| StoreError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_records(&text, registry).map_err(|e| StoreError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// The three dataset partitions.
#[derive(Debug, Clone, Default)]
pub struct DatasetSplit {
    pub examples: Vec<ExampleRecord>,
    pub validation: Vec<ExampleRecord>,
    pub test: Vec<ExampleRecord>,
}

impl DatasetSplit {
    /// Reads `examples.jsonl`, `validation.jsonl` and `test.jsonl` from a
    /// directory. Missing validation or test files give empty partitions.
    pub fn load_dir(dir: &Path, registry: &TemplateRegistry) -> Result<Self, StoreError> {
        let optional = |name: &str| -> Result<Vec<ExampleRecord>, StoreError> {
            let path = dir.join(name);
            if path.exists() {
                load_records(&path, registry)
            } else {
                Ok(Vec::new())
            }
        };
        let split = DatasetSplit {
            examples: load_records(&dir.join("examples.jsonl"), registry)?,
            validation: optional("validation.jsonl")?,
            test: optional("test.jsonl")?,
        };
        split.check_disjoint()?;
        Ok(split)
    }

    pub fn check_disjoint(&self) -> Result<(), StoreError> {
        let tasks = |records: &[ExampleRecord]| -> BTreeSet<String> {
            records.iter().map(|r| r.task.trim().to_lowercase()).collect()
        };
        let (e, v, t) = (tasks(&self.examples), tasks(&self.validation), tasks(&self.test));
        match e.intersection(&v).chain(e.intersection(&t)).chain(v.intersection(&t)).next() {
            Some(task) => Err(StoreError::OverlappingSplits(task.clone())),
            None => Ok(()),
        }
    }

    pub fn partition(&self, name: &str) -> Option<&[ExampleRecord]> {
        match name {
            "examples" | "example" => Some(&self.examples),
            "validation" => Some(&self.validation),
            "test" => Some(&self.test),
            _ => None,
        }
    }

    /// Seeded shuffle of records into three partitions by task, so that no
    /// task spans two partitions. Sizes count tasks, not records.
    pub fn seeded_split(records: Vec<ExampleRecord>, validation_tasks: usize, test_tasks: usize, seed: u64) -> Self {
        let mut tasks: Vec<String> = Vec::new();
        for r in &records {
            let t = r.task.trim().to_lowercase();
            if !tasks.contains(&t) {
                tasks.push(t);
            }
        }
        tasks.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let validation: BTreeSet<&String> = tasks.iter().take(validation_tasks).collect();
        let test: BTreeSet<&String> = tasks.iter().skip(validation_tasks).take(test_tasks).collect();
        let mut split = DatasetSplit::default();
        for r in records {
            let t = r.task.trim().to_lowercase();
            if validation.contains(&t) {
                split.validation.push(r);
            } else if test.contains(&t) {
                split.test.push(r);
            } else {
                split.examples.push(r);
            }
        }
        split
    }
}

/// Corpus for the stub language model: each record's task and NL steps.
pub fn stub_corpus(records: &[ExampleRecord]) -> Vec<StubPlan> {
    records
        .iter()
        .map(|r| StubPlan {
            task: r.task.clone(),
            steps: r.plan.steps.iter().map(render_nl).collect(),
        })
        .collect()
}

/// Cosine of the two task embeddings.
pub fn task_similarity(lm: &dyn LanguageModel, t1: &str, t2: &str) -> Result<f64, StoreError> {
    if t1.trim().is_empty() || t2.trim().is_empty() {
        return Err(LmError::Precondition("empty task text".into()).into());
    }
    Ok(cosine(&lm.embed(t1)?, &lm.embed(t2)?)?)
}

/// Picks an index: the top `n_e` entries by task similarity (stable on ties),
/// then the best `s_m + w_s * s_g` among them, earliest dataset index on ties.
/// `scene` is only evaluated for pool members.
pub fn select_index<F: Real>(
    task_scores: &[F],
    mut scene: impl FnMut(usize) -> F,
    n_e: usize,
    w_s: F,
) -> Option<(usize, F, F)> {
    if task_scores.is_empty() || n_e == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..task_scores.len()).collect();
    order.sort_by(|&a, &b| task_scores[b].partial_cmp(&task_scores[a]).unwrap_or(std::cmp::Ordering::Equal));
    order.truncate(n_e);
    let mut best: Option<(usize, F, F)> = None;
    for i in order {
        let s_g = scene(i);
        let total = task_scores[i] + w_s * s_g;
        let better = match best {
            None => true,
            Some((j, s, _)) => {
                let current = task_scores[j] + w_s * s;
                total > current || (total == current && i < j)
            }
        };
        if better {
            best = Some((i, s_g, total));
        }
    }
    best
}

/// The chosen few-shot example and its scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub task_similarity: f64,
    pub scene_similarity: f64,
    pub score: f64,
}

pub fn select_example(
    lm: &dyn LanguageModel,
    query_task: &str,
    query_env: &EnvironmentGraph,
    store: &[ExampleRecord],
    n_e: usize,
    w_s: f64,
) -> Result<Selection, StoreError> {
    if store.is_empty() {
        return Err(StoreError::Empty);
    }
    if n_e == 0 {
        return Err(StoreError::ZeroPool);
    }
    let sm = store
        .iter()
        .map(|r| task_similarity(lm, query_task, &r.task))
        .collect::<Result<Vec<f64>, _>>()?;
    let (index, s_g, score) = select_index(&sm, |i| env_similarity(query_env, &store[i].env_before), n_e, w_s)
        .expect("nonempty store and pool");
    Ok(Selection {
        index,
        task_similarity: sm[index],
        scene_similarity: s_g,
        score,
    })
}

/// The action prompt and the object prompt.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Prompts {
    pub action: String,
    pub objects: String,
}

pub fn build_prompts(example: &ExampleRecord, query_task: &str, layout: &PromptLayout) -> Prompts {
    let mut action = layout.task_line(&example.task);
    for (i, step) in example.plan.steps.iter().enumerate() {
        action.push_str(&layout.step_line(i + 1, &render_nl(step)));
    }
    action.push_str(&layout.block_separator);
    action.push_str(&layout.task_line(query_task));

    let mut names: Vec<String> = Vec::new();
    for step in &example.plan.steps {
        for name in &step.object_names {
            let shown = display_name(name);
            if !names.contains(&shown) {
                names.push(shown);
            }
        }
    }
    Prompts {
        action,
        objects: names.join(", "),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env_graph::{GraphEdge, GraphNode, NodeId};
    use crate::lm::StubBackend;
    use crate::script::extract_objects;
    use proptest::prelude::*;

    fn env(cats: &[&str]) -> EnvironmentGraph {
        EnvironmentGraph::new(
            cats.iter()
                .enumerate()
                .map(|(i, c)| GraphNode::new(i as u32 + 1, c))
                .collect(),
            vec![],
        )
        .unwrap()
    }

    fn record(task: &str, lines: &[&str], scene: EnvironmentGraph) -> ExampleRecord {
        let r = TemplateRegistry::builtin();
        ExampleRecord {
            task: task.into(),
            description: None,
            plan: Plan {
                task: task.into(),
                steps: lines.iter().map(|l| parse_script_line(l, &r).unwrap()).collect(),
            },
            env_before: scene,
            env_after: None,
            source_line: 1,
        }
    }

    #[test]
    fn similarity_contract() {
        let lm = StubBackend::new(vec![]);
        assert!((task_similarity(&lm, "watch tv", "watch tv").unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(
            task_similarity(&lm, "read a book", "watch tv").unwrap(),
            task_similarity(&lm, "watch tv", "read a book").unwrap()
        );
        assert!(
            task_similarity(&lm, "play video games", "use the computer").unwrap()
                > task_similarity(&lm, "play video games", "wash clothes").unwrap()
        );
        assert!(task_similarity(&lm, "", "x").is_err());
    }

    #[test]
    fn selection_prefers_matching_scene() {
        let lm = StubBackend::new(vec![]);
        let query = env(&["living_room", "rag", "floor"]);
        let store = vec![
            record("clean the house", &["[Grab] <mop> (2)"], env(&["living_room", "mop", "floor"])),
            record("clean the house", &["[Grab] <rag> (2)"], env(&["living_room", "rag", "floor"])),
        ];
        let pick = select_example(&lm, "clean the living room", &query, &store, 10, 0.5).unwrap();
        assert_eq!(pick.index, 1);
        let pick = select_example(&lm, "clean the living room", &query, &store, 10, 1e-6).unwrap();
        assert_eq!(pick.index, 1);
        let pick = select_example(&lm, "clean the living room", &query, &store, 10, 0.0).unwrap();
        assert_eq!(pick.index, 0);
        let single = select_example(&lm, "anything", &query, &store[..1], 3, 0.5).unwrap();
        assert_eq!(single.index, 0);
        assert!(matches!(select_example(&lm, "x", &query, &[], 3, 0.5), Err(StoreError::Empty)));
    }

    #[test]
    fn prompts() {
        let layout = PromptLayout::default();
        let ex = record("use computer", &["[Walk] <desk> (1)", "[SwitchOn] <computer> (2)"], env(&["desk", "computer"]));
        let p = build_prompts(&ex, "check email", &layout);
        assert_eq!(p.objects, "desk, computer");
        assert_eq!(
            p.action,
            "Task: use computer\nStep 1: walk to desk\nStep 2: switch on computer\n\nTask: check email\n"
        );
        let registry = TemplateRegistry::builtin();
        for block in layout.parse(&p.action) {
            for step in block.steps {
                assert!(extract_objects(&step, &registry).is_ok());
            }
        }
        let empty = record("idle", &[], env(&["desk"]));
        let p = build_prompts(&empty, "check email", &layout);
        assert_eq!(p.action, "Task: idle\n\nTask: check email\n");
        assert_eq!(p.objects, "");
    }

    #[test]
    fn jsonl_loading() {
        let r = TemplateRegistry::builtin();
        let scene = env(&["kitchen", "cup"]).to_json();
        let text = format!(
            "{{\"task\":\"grab cup\",\"plan\":[\"[Grab] <cup> (2)\"],\"environments\":[{{\"env_before\":{scene}}},{{\"env_before\":{scene}}}]}}\n\n\
             {{\"task\":\"idle\",\"plan\":[],\"env_before\":{scene}}}\n"
        );
        let records = parse_records(&text, &r).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[0].source_line, 1);
        assert_eq!(records[1].source_line, 1);
        assert_eq!(records[2].source_line, 3);

        let bad = "{\"task\":\"x\",\"plan\":[\"[Fly] <cup> (2)\"],\"env_before\":{\"nodes\":[],\"edges\":[]}}";
        let err = parse_records(bad, &r).unwrap_err().to_string();
        assert!(err.starts_with("line 1: plan step 1"), "{err}");
        let err = parse_records("{\"task\":\"x\",\"plan\":[]}", &r).unwrap_err();
        assert!(matches!(err, StoreError::MissingEnvironment { line: 1 }));
        let err = parse_records("{\"task\":\"x\",\"plan\":[],\"env_before\":{\"nodes\":[],\"edges\":[{\"from_id\":1,\"relation\":\"ON\",\"to_id\":2}]}}", &r)
            .unwrap_err()
            .to_string();
        assert!(err.contains("edges[0].from_id"), "{err}");
    }

    #[test]
    fn ground_truth_reconstruction() {
        let scene = EnvironmentGraph::new(
            vec![
                GraphNode::new(1, "kitchen").with_properties(&["room"]),
                GraphNode::new(2, "cup").with_properties(&["grabbable"]),
            ],
            vec![GraphEdge::new(NodeId(2), "INSIDE", NodeId(1))],
        )
        .unwrap();
        let rec = record("grab cup", &["[Walk] <cup> (2)", "[Grab] <cup> (2)"], scene);
        let after = rec.ground_truth_after();
        assert!(after.edges().iter().any(|e| e.relation == "HOLDS"));
    }

    #[test]
    fn seeded_split_is_disjoint() {
        let recs: Vec<ExampleRecord> = (0..10)
            .flat_map(|i| {
                let t = format!("task {i}");
                vec![record(&t, &[], env(&["a"])), record(&t, &[], env(&["b"]))]
            })
            .collect();
        let s = DatasetSplit::seeded_split(recs.clone(), 2, 3, 9);
        assert_eq!((s.examples.len(), s.validation.len(), s.test.len()), (10, 4, 6));
        s.check_disjoint().unwrap();
        let again = DatasetSplit::seeded_split(recs, 2, 3, 9);
        assert_eq!(s.test, again.test);
    }

    proptest! {
        #[test]
        fn selection_laws(
            sm in prop::collection::vec(-1.0f64..1.0, 1..12),
            sg_seed in prop::collection::vec(0.0f64..2.0, 12),
            n_e in 1usize..12,
            w1 in 0.0f64..3.0,
            dw in 0.0f64..3.0,
            c in 0.1f64..10.0,
        ) {
            let sg = |i: usize| sg_seed[i];
            let (a, sa, _) = select_index(&sm, sg, n_e, w1).unwrap();
            let (b, sb, _) = select_index(&sm, sg, n_e, w1 + dw).unwrap();
            prop_assert!(sb >= sa);
            let scaled: Vec<f64> = sm.iter().map(|x| x * c).collect();
            let (d, _, _) = select_index(&scaled, |i| sg(i) * 1.0, n_e, w1 * c).unwrap();
            // scaling can only move a near-tie, never a clear winner
            let margin = |k: usize| sm[k] + w1 * sg(k);
            prop_assert!(d == a || (margin(d) - margin(a)).abs() < 1e-9);
            prop_assert_eq!(select_index(&sm, sg, n_e, w1).unwrap().0, a);
            let _ = b;
        }
    }
}
