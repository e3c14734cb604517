//! Mapping free-text samples onto admissible actions and scene objects.

use std::collections::HashMap;

use crate::env_graph::{EnvironmentGraph, NodeId};
use crate::executor::{Rule, Slot, AGENT_CATEGORY};
use crate::lm::{cosine, LanguageModel, LmError};
use crate::script::{display_name, extract_objects, fill_pattern, ActionStep, TemplateRegistry};

use super::scoring::disambiguation_at;

/// Upper bound on enumerated bindings before truncation to the cap.
const ENUMERATION_LIMIT: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct ActionMatch {
    /// Ungrounded step carrying the sample's own object phrases.
    pub step: ActionStep,
    pub rendering: String,
    pub p_am: f64,
}

/// Maps a sample to the closest admissible rendering, or `None` when the
/// text does not parse as any action.
pub fn match_action(
    lm: &dyn LanguageModel,
    sample_text: &str,
    registry: &TemplateRegistry,
) -> Result<Option<ActionMatch>, LmError> {
    if sample_text.trim().is_empty() {
        return Ok(None);
    }
    let Ok((_, names)) = extract_objects(sample_text, registry) else {
        return Ok(None);
    };
    let sample = lm.embed(sample_text)?;
    let mut best: Option<ActionMatch> = None;
    for template in registry.templates().iter().filter(|t| t.arity == names.len()) {
        let rendering = fill_pattern(&template.nl_pattern, &names);
        let p_am = cosine(&sample, &lm.embed(&rendering)?)?;
        if best.as_ref().is_none_or(|b| p_am > b.p_am) {
            best = Some(ActionMatch {
                step: ActionStep::new(template.clone(), names.clone()),
                rendering,
                p_am,
            });
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectMatch {
    pub name: String,
    pub category: String,
    pub similarity: f64,
}

/// Scene categories an action may refer to, in first-appearance order.
pub fn object_categories(env: &EnvironmentGraph) -> Vec<&str> {
    env.categories().into_iter().filter(|c| *c != AGENT_CATEGORY).collect()
}

/// For each name, the scene category with the most similar embedding.
/// Returns `None` when the scene has no objects.
pub fn match_objects(
    lm: &dyn LanguageModel,
    names: &[String],
    env: &EnvironmentGraph,
) -> Result<Option<Vec<ObjectMatch>>, LmError> {
    let categories = object_categories(env);
    if categories.is_empty() {
        return Ok(None);
    }
    let mut out = Vec::with_capacity(names.len());
    for name in names {
        let query = lm.embed(&display_name(name))?;
        let mut best: Option<ObjectMatch> = None;
        for category in &categories {
            let similarity = cosine(&query, &lm.embed(&display_name(category))?)?;
            if best.as_ref().is_none_or(|b| similarity > b.similarity) {
                best = Some(ObjectMatch {
                    name: name.clone(),
                    category: category.to_string(),
                    similarity,
                });
            }
        }
        out.extend(best);
    }
    Ok(Some(out))
}

/// Node positions as the plan so far has left them: objects the agent holds
/// travel with it, placed objects take their destination's position.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PositionOverlay {
    moved: HashMap<NodeId, Option<[f64; 3]>>,
    agent: Option<[f64; 3]>,
    held: Vec<NodeId>,
}

impl PositionOverlay {
    pub fn position(&self, env: &EnvironmentGraph, id: NodeId) -> Option<[f64; 3]> {
        match self.moved.get(&id) {
            Some(p) => *p,
            None => env.node(id).and_then(|n| n.position),
        }
    }

    /// Applies the spatial effects of an accepted grounded step.
    pub fn apply(&mut self, env: &EnvironmentGraph, step: &ActionStep) {
        let Some(ids) = step.object_ids.as_ref() else { return };
        let slot = |s: Slot| match s {
            Slot::Obj0 => ids.first().copied(),
            Slot::Obj1 => ids.get(1).copied(),
            Slot::Agent | Slot::Any => None,
        };
        for rule in &step.template.effects {
            match rule {
                Rule::MoveAgent { target } => {
                    if let Some(id) = slot(*target) {
                        self.agent = self.position(env, id);
                        for held in &self.held {
                            self.moved.insert(*held, self.agent);
                        }
                    }
                }
                Rule::Hold { target } => {
                    if let Some(id) = slot(*target) {
                        self.held.push(id);
                        if self.agent.is_some() {
                            self.moved.insert(id, self.agent);
                        }
                    }
                }
                Rule::Release { target } => {
                    if let Some(id) = slot(*target) {
                        self.held.retain(|h| *h != id);
                    }
                }
                Rule::AddEdge { from, relation, to } if relation == "ON" || relation == "INSIDE" => {
                    if let (Some(a), Some(b)) = (slot(*from), slot(*to)) {
                        let p = self.position(env, b);
                        self.moved.insert(a, p);
                    }
                }
                _ => {}
            }
        }
    }
}

/// One way of binding a step's objects to nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Binding {
    pub ids: Vec<NodeId>,
    /// Mean over the step's objects of the proximity score.
    pub p_od: f64,
}

/// All node combinations for the given categories, nearest to the previous
/// step first, truncated to `cap`.
pub fn candidate_bindings(
    env: &EnvironmentGraph,
    overlay: &PositionOverlay,
    categories: &[String],
    previous: &[NodeId],
    cap: usize,
) -> Vec<Binding> {
    let previous: Vec<Option<[f64; 3]>> = previous.iter().map(|id| overlay.position(env, *id)).collect();
    if categories.is_empty() {
        return vec![Binding {
            ids: Vec::new(),
            p_od: 0.0,
        }];
    }
    let slots: Vec<Vec<(NodeId, f64)>> = categories
        .iter()
        .map(|c| {
            let mut nodes: Vec<(NodeId, f64)> = env
                .nodes_of_category(c)
                .map(|n| (n.id, disambiguation_at(overlay.position(env, n.id), &previous)))
                .collect();
            nodes.sort_by(|a, b| b.1.total_cmp(&a.1));
            nodes
        })
        .collect();
    if slots.iter().any(Vec::is_empty) {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut cursor = vec![0usize; slots.len()];
    'enumerate: loop {
        let ids = cursor.iter().zip(&slots).map(|(&i, s)| s[i].0).collect();
        let p_od = cursor.iter().zip(&slots).map(|(&i, s)| s[i].1).sum::<f64>() / slots.len() as f64;
        out.push(Binding { ids, p_od });
        if out.len() >= ENUMERATION_LIMIT {
            break;
        }
        for pos in (0..slots.len()).rev() {
            cursor[pos] += 1;
            if cursor[pos] < slots[pos].len() {
                continue 'enumerate;
            }
            cursor[pos] = 0;
        }
        break;
    }
    out.sort_by(|a, b| b.p_od.total_cmp(&a.p_od));
    out.truncate(cap);
    out
}
