//! Plan quality metrics: executability, LCS against the annotated plan, and
//! final scene correctness, with run-level aggregation.

use serde::Serialize;
use thiserror::Error;

use crate::env_graph::{graph_diff, iou, EnvironmentGraph};
use crate::example_store::ExampleRecord;
use crate::executor::{executability, execute_plan, ExecutionTrace};
use crate::scalar::{mean, population_std, Real};
use crate::script::Plan;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("node {id} ({category}) of the initial scene is missing from the {which} scene")]
    IdSpaceMismatch {
        id: u32,
        category: String,
        which: &'static str,
    },
    #[error("no results to aggregate")]
    Empty,
}

/// Length of the longest common subsequence, by dynamic programming.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// LCS of the two plans' (verb, object names) sequences over the longer
/// length. Two empty plans score 1, one empty plan scores 0.
pub fn lcs_score<F: Real>(generated: &Plan, ground_truth: &Plan) -> F {
    let a: Vec<_> = generated.steps.iter().map(|s| s.key()).collect();
    let b: Vec<_> = ground_truth.steps.iter().map(|s| s.key()).collect();
    let longest = a.len().max(b.len());
    if longest == 0 {
        return F::one();
    }
    F::count(lcs_len(&a, &b)) / F::count(longest)
}

fn check_ids(init: &EnvironmentGraph, other: &EnvironmentGraph, which: &'static str) -> Result<(), MetricsError> {
    for node in init.nodes() {
        match other.node(node.id) {
            Some(n) if n.category == node.category => {}
            _ => {
                return Err(MetricsError::IdSpaceMismatch {
                    id: node.id.0,
                    category: node.category.clone(),
                    which,
                })
            }
        }
    }
    Ok(())
}

/// Node IoU plus edge IoU of what the generated and the ground-truth
/// executions changed, in `[0, 2]`.
pub fn final_correctness<F: Real>(
    e_init: &EnvironmentGraph,
    e_out: &EnvironmentGraph,
    e_gt: &EnvironmentGraph,
) -> Result<F, MetricsError> {
    check_ids(e_init, e_out, "generated")?;
    check_ids(e_init, e_gt, "ground-truth")?;
    let out = graph_diff(e_init, e_out);
    let gt = graph_diff(e_init, e_gt);
    Ok(iou::<_, F>(&out.nodes, &gt.nodes) + iou::<_, F>(&out.edges, &gt.edges))
}

/// Scores for one generated plan, or aggregate values over many.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EvalResult<F = f64> {
    /// Percent of steps executed, `[0, 100]`.
    pub executability: F,
    /// `[0, 1]`.
    pub lcs: F,
    /// `[0, 2]`.
    pub final_correctness: F,
    pub plan_length: F,
}

impl<F: Real> EvalResult<F> {
    /// Final correctness on a percent scale.
    pub fn correctness_percent(&self) -> F {
        self.final_correctness / F::lit(2.0) * F::lit(100.0)
    }

    pub fn in_range(&self) -> bool {
        let within = |v: F, hi: f64| v >= F::zero() && v <= F::lit(hi);
        within(self.executability, 100.0)
            && within(self.lcs, 1.0)
            && within(self.final_correctness, 2.0)
            && self.plan_length >= F::zero()
    }

    fn map(values: &[Self], f: impl Fn(&[F]) -> Option<F>) -> Option<Self> {
        let col = |g: fn(&Self) -> F| -> Vec<F> { values.iter().map(g).collect() };
        Some(EvalResult {
            executability: f(&col(|r| r.executability))?,
            lcs: f(&col(|r| r.lcs))?,
            final_correctness: f(&col(|r| r.final_correctness))?,
            plan_length: f(&col(|r| r.plan_length))?,
        })
    }
}

/// Column means and population standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate<F = f64> {
    pub mean: EvalResult<F>,
    pub std: EvalResult<F>,
    pub count: usize,
}

pub fn aggregate<F: Real>(results: &[EvalResult<F>]) -> Result<Aggregate<F>, MetricsError> {
    Ok(Aggregate {
        mean: EvalResult::map(results, mean).ok_or(MetricsError::Empty)?,
        std: EvalResult::map(results, population_std).ok_or(MetricsError::Empty)?,
        count: results.len(),
    })
}

/// A generated plan scored against one dataset record.
#[derive(Debug, Clone)]
pub struct RecordEvaluation {
    pub result: EvalResult<f64>,
    pub trace: ExecutionTrace,
    /// True when the record had no annotated final scene and the ground
    /// truth was obtained by executing its plan.
    pub reconstructed: bool,
}

pub fn evaluate_record(generated: &Plan, record: &ExampleRecord) -> Result<RecordEvaluation, MetricsError> {
    let trace = execute_plan(&record.env_before, generated);
    let gt = record.ground_truth_after();
    let result = EvalResult {
        executability: executability(&trace, generated),
        lcs: lcs_score(generated, &record.plan),
        final_correctness: final_correctness(&record.env_before, &trace.final_env, &gt)?,
        plan_length: generated.len() as f64,
    };
    Ok(RecordEvaluation {
        result,
        trace,
        reconstructed: record.env_after.is_none(),
    })
}

/// Scores every (plan, record) pair and aggregates them.
pub fn evaluate_run(pairs: &[(Plan, &ExampleRecord)]) -> Result<(Aggregate<f64>, Vec<RecordEvaluation>), MetricsError> {
    let evaluations = pairs
        .iter()
        .map(|(plan, record)| evaluate_record(plan, record))
        .collect::<Result<Vec<_>, _>>()?;
    let results: Vec<EvalResult<f64>> = evaluations.iter().map(|e| e.result).collect();
    Ok((aggregate(&results)?, evaluations))
}
