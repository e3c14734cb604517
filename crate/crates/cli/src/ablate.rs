//! Ablation grids: named arms and cartesian sweeps over planner fields.
//!
//! ```toml
//! [[arm]]
//! name = "w/o scene score"
//! w_s = 0
//!
//! [grid]
//! w_s = [0.0, 0.5, 1.0]
//! n_e = [5, 10]
//! ```

use groundplan::PlannerConfig;
use serde::Serialize;

use crate::config::set_field;
use crate::error::CliError;
use crate::harness::ModeReport;

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub name: String,
    pub overrides: Vec<(String, serde_json::Value)>,
}

impl GridPoint {
    fn new(name: &str, overrides: &[(&str, serde_json::Value)]) -> Self {
        GridPoint {
            name: name.to_string(),
            overrides: overrides.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        }
    }

    pub fn apply(&self, base: &PlannerConfig) -> Result<PlannerConfig, CliError> {
        self.overrides
            .iter()
            .try_fold(base.clone(), |c, (k, v)| set_field(&c, k, v.clone()))
    }

    pub fn describe(&self) -> String {
        let parts: Vec<String> = self.overrides.iter().map(|(k, v)| format!("{k}={v}")).collect();
        parts.join(";")
    }
}

/// The full method and its three score ablations.
pub fn score_ablation_preset() -> Vec<GridPoint> {
    let zero = || serde_json::json!(0.0);
    let no_objects = [
        ("w_o", zero()),
        ("w_om", zero()),
        ("w_od", zero()),
        ("pair_repeat_penalty", zero()),
    ];
    let mut baseline = vec![("w_s", zero())];
    baseline.extend(no_objects.iter().cloned());
    baseline.push(("binding", serde_json::json!("random_same_name")));
    vec![
        GridPoint::new("full", &[]),
        GridPoint::new("w/o scene score", &[("w_s", zero())]),
        GridPoint::new("w/o object score", &no_objects),
        GridPoint::new("baseline scores", &baseline),
    ]
}

fn toml_to_json(v: &toml::Value) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Usage(e.to_string()))
}

/// Parses a grid file: `[[arm]]` points first, then the cartesian product
/// of `[grid]` lists in key order.
pub fn parse_grid(text: &str) -> Result<Vec<GridPoint>, CliError> {
    let mut doc: toml::Table = toml::from_str(text).map_err(|e| CliError::Usage(format!("grid: {e}")))?;
    let mut points = Vec::new();
    if let Some(arms) = doc.remove("arm") {
        let arms = arms
            .as_array()
            .ok_or_else(|| CliError::Usage("grid: `arm` must be an array of tables".into()))?;
        for (i, arm) in arms.iter().enumerate() {
            let table = arm
                .as_table()
                .ok_or_else(|| CliError::Usage(format!("grid: arm {i} is not a table")))?;
            let name = table
                .get("name")
                .and_then(|n| n.as_str())
                .map_or_else(|| format!("arm{i}"), str::to_string);
            let overrides = table
                .iter()
                .filter(|(k, _)| *k != "name")
                .map(|(k, v)| Ok((k.clone(), toml_to_json(v)?)))
                .collect::<Result<_, CliError>>()?;
            points.push(GridPoint { name, overrides });
        }
    }
    if let Some(grid) = doc.remove("grid") {
        let grid = grid
            .as_table()
            .ok_or_else(|| CliError::Usage("grid: `grid` must be a table".into()))?;
        let mut combos: Vec<Vec<(String, serde_json::Value)>> = vec![Vec::new()];
        for (key, values) in grid {
            let values = match values {
                toml::Value::Array(a) => a.clone(),
                single => vec![single.clone()],
            };
            let mut next = Vec::new();
            for combo in &combos {
                for v in &values {
                    let mut c = combo.clone();
                    c.push((key.clone(), toml_to_json(v)?));
                    next.push(c);
                }
            }
            combos = next;
        }
        for overrides in combos {
            let mut point = GridPoint {
                name: String::new(),
                overrides,
            };
            point.name = point.describe();
            points.push(point);
        }
    }
    if let Some(key) = doc.keys().next() {
        return Err(CliError::Usage(format!("grid: unknown section {key:?}")));
    }
    if points.is_empty() {
        return Err(CliError::Usage("grid has no points".into()));
    }
    Ok(points)
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    point: &'a str,
    overrides: String,
    w_s: f64,
    w_a: f64,
    w_am: f64,
    w_o: f64,
    w_om: f64,
    w_od: f64,
    action_repeat_penalty: f64,
    pair_repeat_penalty: f64,
    binding: String,
    n_e: usize,
    k: usize,
    runs: usize,
    executability_mean: f64,
    executability_std: f64,
    lcs_pct_mean: f64,
    lcs_pct_std: f64,
    correctness_pct_mean: f64,
    correctness_pct_std: f64,
    plan_length_mean: f64,
    plan_length_std: f64,
}

/// One CSV row per grid point, metrics in percent except plan length.
pub fn grid_csv(points: &[GridPoint], reports: &[ModeReport]) -> Result<String, CliError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for (point, report) in points.iter().zip(reports) {
        let c = &report.config;
        let (m, s) = (&report.summary.mean, &report.summary.std);
        let binding = serde_json::to_value(c.binding).map_err(|e| CliError::Invariant(e.to_string()))?;
        writer
            .serialize(CsvRow {
                point: &point.name,
                overrides: point.describe(),
                w_s: c.w_s,
                w_a: c.w_a,
                w_am: c.w_am,
                w_o: c.w_o,
                w_om: c.w_om,
                w_od: c.w_od,
                action_repeat_penalty: c.action_repeat_penalty,
                pair_repeat_penalty: c.pair_repeat_penalty,
                binding: binding.as_str().unwrap_or_default().to_string(),
                n_e: c.n_e,
                k: c.k,
                runs: report.summary.count,
                executability_mean: m.executability,
                executability_std: s.executability,
                lcs_pct_mean: m.lcs * 100.0,
                lcs_pct_std: s.lcs * 100.0,
                correctness_pct_mean: m.correctness_percent(),
                correctness_pct_std: s.correctness_percent(),
                plan_length_mean: m.plan_length,
                plan_length_std: s.plan_length,
            })
            .map_err(|e| CliError::Invariant(e.to_string()))?;
    }
    let bytes = writer.into_inner().map_err(|e| CliError::Invariant(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Invariant(e.to_string()))
}
