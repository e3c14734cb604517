//! Rule-driven symbolic execution of grounded plans.
//!
//! Every template in the registry carries precondition and effect rules. A
//! step executes when all preconditions hold; its effects are then applied to
//! a copy of the graph. Execution of a plan stops at the first failing step.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env_graph::{EnvironmentGraph, GraphError, GraphNode, NodeId};
use crate::scalar::Real;
use crate::script::{render_script_line, ActionStep, Plan};

pub const AGENT_CATEGORY: &str = "character";
pub const HAND_CAPACITY: usize = 2;

/// Argument slot of a rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Slot {
    Agent,
    Obj0,
    Obj1,
    /// Wildcard, only meaningful as an edge endpoint of a pattern rule.
    Any,
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Slot::Agent => "AGENT",
            Slot::Obj0 => "OBJ0",
            Slot::Obj1 => "OBJ1",
            Slot::Any => "ANY",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Rule {
    RequireEdge { from: Slot, relation: String, to: Slot },
    ForbidEdge { from: Slot, relation: String, to: Slot },
    RequireState { target: Slot, state: String },
    RequireProperty { target: Slot, property: String },
    RequireFreeHand,
    AddEdge { from: Slot, relation: String, to: Slot },
    RemoveEdge { from: Slot, relation: String, to: Slot },
    SetState { target: Slot, state: String },
    ClearState { target: Slot, state: String },
    /// Walks the agent to the target: replaces its CLOSE edges with the
    /// target and the target's contents, and updates the room it is in.
    MoveAgent { target: Slot },
    Hold { target: Slot },
    Release { target: Slot },
}

impl Rule {
    pub fn slots(&self) -> Vec<Slot> {
        match self {
            Rule::RequireEdge { from, to, .. }
            | Rule::ForbidEdge { from, to, .. }
            | Rule::AddEdge { from, to, .. }
            | Rule::RemoveEdge { from, to, .. } => vec![*from, *to],
            Rule::RequireState { target, .. }
            | Rule::RequireProperty { target, .. }
            | Rule::SetState { target, .. }
            | Rule::ClearState { target, .. }
            | Rule::MoveAgent { target }
            | Rule::Hold { target }
            | Rule::Release { target } => vec![*target],
            Rule::RequireFreeHand => vec![],
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::RequireEdge { from, relation, to } => write!(f, "require_edge {from} {relation} {to}"),
            Rule::ForbidEdge { from, relation, to } => write!(f, "forbid_edge {from} {relation} {to}"),
            Rule::RequireState { target, state } => write!(f, "require_state {state} ({target})"),
            Rule::RequireProperty { target, property } => {
                write!(f, "require_property {property} ({target})")
            }
            Rule::RequireFreeHand => f.write_str("require_free_hand"),
            Rule::AddEdge { from, relation, to } => write!(f, "add_edge {from} {relation} {to}"),
            Rule::RemoveEdge { from, relation, to } => write!(f, "remove_edge {from} {relation} {to}"),
            Rule::SetState { target, state } => write!(f, "set_state {state} ({target})"),
            Rule::ClearState { target, state } => write!(f, "clear_state {state} ({target})"),
            Rule::MoveAgent { target } => write!(f, "move_agent {target}"),
            Rule::Hold { target } => write!(f, "hold {target}"),
            Rule::Release { target } => write!(f, "release {target}"),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum StepFailure {
    #[error("step is not grounded")]
    Ungrounded,
    #[error("missing node id {0}")]
    MissingNode(NodeId),
    #[error("{rule} violated")]
    Precondition { rule: String },
    #[error("held-capacity exceeded")]
    CapacityExceeded,
    #[error("effect {rule} is inconsistent: {message}")]
    Inconsistent { rule: String, message: String },
}

/// The agent as seen by the executor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AgentState {
    pub agent_node_id: NodeId,
    pub held: BTreeSet<NodeId>,
    pub close_to: BTreeSet<NodeId>,
}

impl AgentState {
    /// Reads hand and proximity state off the agent's edges.
    pub fn observe(env: &EnvironmentGraph, agent: NodeId) -> Self {
        AgentState {
            agent_node_id: agent,
            held: env.targets(agent, "HOLDS").into_iter().collect(),
            close_to: env.targets(agent, "CLOSE").into_iter().collect(),
        }
    }
}

/// Finds the agent node, or adds a synthetic one with empty hands.
pub fn initial_agent(env: &EnvironmentGraph) -> (EnvironmentGraph, AgentState) {
    if let Some(node) = env.nodes_of_category(AGENT_CATEGORY).next() {
        return (env.clone(), AgentState::observe(env, node.id));
    }
    let mut env = env.clone();
    let id = NodeId(env.max_id() + 1);
    env.insert_node(GraphNode::new(id.0, AGENT_CATEGORY))
        .expect("fresh id is unused");
    let agent = AgentState::observe(&env, id);
    (env, agent)
}

struct Bindings {
    agent: NodeId,
    objects: Vec<NodeId>,
}

impl Bindings {
    fn resolve(&self, slot: Slot) -> Option<NodeId> {
        match slot {
            Slot::Agent => Some(self.agent),
            Slot::Obj0 => self.objects.first().copied(),
            Slot::Obj1 => self.objects.get(1).copied(),
            Slot::Any => None,
        }
    }
}

fn room_of(env: &EnvironmentGraph, id: NodeId) -> Option<NodeId> {
    let mut current = id;
    for _ in 0..16 {
        let node = env.node(current)?;
        if node.has_property("room") {
            return Some(current);
        }
        let parent = env
            .targets(current, "ON")
            .into_iter()
            .chain(env.targets(current, "INSIDE"))
            .next()?;
        current = parent;
    }
    None
}

fn check(env: &EnvironmentGraph, rule: &Rule, b: &Bindings) -> Result<(), StepFailure> {
    let violated = || StepFailure::Precondition {
        rule: rule.to_string(),
    };
    let node = |slot: Slot| b.resolve(slot).and_then(|id| env.node(id));
    let edge_exists = |from: Slot, relation: &str, to: Slot| {
        env.edges().iter().any(|e| {
            e.relation == relation
                && b.resolve(from).is_none_or(|id| e.from_id == id)
                && b.resolve(to).is_none_or(|id| e.to_id == id)
        })
    };
    let ok = match rule {
        Rule::RequireEdge { from, relation, to } => edge_exists(*from, relation, *to),
        Rule::ForbidEdge { from, relation, to } => !edge_exists(*from, relation, *to),
        Rule::RequireState { target, state } => node(*target).is_some_and(|n| n.states.contains(state)),
        Rule::RequireProperty { target, property } => {
            node(*target).is_some_and(|n| n.properties.contains(property))
        }
        Rule::RequireFreeHand => env.targets(b.agent, "HOLDS").len() < HAND_CAPACITY,
        _ => true,
    };
    if ok {
        Ok(())
    } else {
        Err(violated())
    }
}

fn apply(env: &mut EnvironmentGraph, rule: &Rule, b: &Bindings) -> Result<(), StepFailure> {
    let inconsistent = |e: GraphError| StepFailure::Inconsistent {
        rule: rule.to_string(),
        message: e.to_string(),
    };
    match rule {
        Rule::AddEdge { from, relation, to } => {
            if let (Some(f), Some(t)) = (b.resolve(*from), b.resolve(*to)) {
                env.add_edge(f, relation, t).map_err(inconsistent)?;
            }
        }
        Rule::RemoveEdge { from, relation, to } => {
            env.remove_edges(b.resolve(*from), relation, b.resolve(*to));
        }
        Rule::SetState { target, state } | Rule::ClearState { target, state } => {
            let id = b.resolve(*target).expect("state rules target a bound slot");
            let node = env.node_mut(id).ok_or(StepFailure::MissingNode(id))?;
            if matches!(rule, Rule::SetState { .. }) {
                node.states.insert(state.clone());
            } else {
                node.states.remove(state);
            }
        }
        Rule::MoveAgent { target } => {
            let target = b.resolve(*target).expect("move target is bound");
            env.remove_edges(Some(b.agent), "CLOSE", None);
            let is_room = env.node(target).is_some_and(|n| n.has_property("room"));
            if !is_room {
                env.add_edge(b.agent, "CLOSE", target).map_err(inconsistent)?;
                let contents: Vec<NodeId> = env
                    .sources("ON", target)
                    .into_iter()
                    .chain(env.sources("INSIDE", target))
                    .filter(|&id| id != b.agent)
                    .collect();
                for id in contents {
                    env.add_edge(b.agent, "CLOSE", id).map_err(inconsistent)?;
                }
            }
            if let Some(room) = room_of(env, target) {
                env.remove_edges(Some(b.agent), "INSIDE", None);
                env.add_edge(b.agent, "INSIDE", room).map_err(inconsistent)?;
            }
        }
        Rule::Hold { target } => {
            let id = b.resolve(*target).expect("hold target is bound");
            if env.targets(b.agent, "HOLDS").len() >= HAND_CAPACITY {
                return Err(StepFailure::CapacityExceeded);
            }
            env.add_edge(b.agent, "HOLDS", id).map_err(inconsistent)?;
        }
        Rule::Release { target } => {
            let id = b.resolve(*target).expect("release target is bound");
            env.remove_edges(Some(b.agent), "HOLDS", Some(id));
        }
        _ => {}
    }
    Ok(())
}

/// Executes one grounded step. Preconditions are checked in order and the
/// first violation is reported; effects are applied to a copy.
pub fn execute_step(
    env: &EnvironmentGraph,
    agent: &AgentState,
    step: &ActionStep,
) -> Result<(EnvironmentGraph, AgentState), StepFailure> {
    let ids = step.object_ids.as_ref().ok_or(StepFailure::Ungrounded)?;
    if ids.len() != step.template.arity {
        return Err(StepFailure::Ungrounded);
    }
    for &id in ids.iter().chain(std::iter::once(&agent.agent_node_id)) {
        if !env.contains(id) {
            return Err(StepFailure::MissingNode(id));
        }
    }
    let b = Bindings {
        agent: agent.agent_node_id,
        objects: ids.clone(),
    };
    for rule in &step.template.preconditions {
        check(env, rule, &b)?;
    }
    let mut next = env.clone();
    for rule in &step.template.effects {
        apply(&mut next, rule, &b)?;
    }
    let agent = AgentState::observe(&next, b.agent);
    Ok((next, agent))
}

/// Node ids an executed step may touch: the agent and the bound objects.
pub fn effect_footprint(step: &ActionStep, agent: &AgentState) -> BTreeSet<NodeId> {
    let mut ids: BTreeSet<NodeId> = step.object_ids.iter().flatten().copied().collect();
    ids.insert(agent.agent_node_id);
    ids
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepResult {
    pub step: String,
    pub ok: bool,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionTrace {
    pub step_results: Vec<StepResult>,
    pub final_env: EnvironmentGraph,
    pub final_agent: Option<AgentState>,
}

impl ExecutionTrace {
    pub fn ok_steps(&self) -> usize {
        self.step_results.iter().filter(|r| r.ok).count()
    }

    /// One JSON object per executed step.
    pub fn to_jsonl(&self) -> String {
        self.step_results
            .iter()
            .map(|r| serde_json::to_string(r).expect("step result serializes") + "\n")
            .collect()
    }
}

/// Runs a plan from the initial environment, stopping at the first failure.
///
/// An empty plan leaves the environment untouched; otherwise a synthetic
/// agent is added when the scene has none.
pub fn execute_plan(env: &EnvironmentGraph, plan: &Plan) -> ExecutionTrace {
    if plan.is_empty() {
        return ExecutionTrace {
            step_results: Vec::new(),
            final_env: env.clone(),
            final_agent: None,
        };
    }
    let (mut current, mut agent) = initial_agent(env);
    let mut results = Vec::with_capacity(plan.len());
    for step in &plan.steps {
        let line = render_script_line(step).unwrap_or_else(|_| step.to_string());
        match execute_step(&current, &agent, step) {
            Ok((next, next_agent)) => {
                current = next;
                agent = next_agent;
                results.push(StepResult {
                    step: line,
                    ok: true,
                    reason: None,
                });
            }
            Err(failure) => {
                results.push(StepResult {
                    step: line,
                    ok: false,
                    reason: Some(failure.to_string()),
                });
                break;
            }
        }
    }
    ExecutionTrace {
        step_results: results,
        final_env: current,
        final_agent: Some(agent),
    }
}

/// Percentage of plan steps that executed; a null plan scores 0.
pub fn executability<F: Real>(trace: &ExecutionTrace, plan: &Plan) -> F {
    if plan.is_empty() {
        return F::zero();
    }
    F::lit(100.0) * F::count(trace.ok_steps()) / F::count(plan.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env_graph::{graph_diff, GraphEdge};
    use crate::script::{parse_script_line, TemplateRegistry};

    fn scene() -> EnvironmentGraph {
        EnvironmentGraph::new(
            vec![
                GraphNode::new(1, "kitchen").with_properties(&["room"]),
                GraphNode::new(2, "character"),
                GraphNode::new(3, "table").with_properties(&["surface"]),
                GraphNode::new(7, "plate").with_properties(&["grabbable"]),
                GraphNode::new(8, "cup").with_properties(&["grabbable"]),
                GraphNode::new(9, "glass").with_properties(&["grabbable"]),
                GraphNode::new(5, "fridge")
                    .with_properties(&["openable", "container"])
                    .with_states(&["open"]),
            ],
            vec![
                GraphEdge::new(NodeId(2), "INSIDE", NodeId(1)),
                GraphEdge::new(NodeId(3), "INSIDE", NodeId(1)),
                GraphEdge::new(NodeId(5), "INSIDE", NodeId(1)),
                GraphEdge::new(NodeId(7), "ON", NodeId(3)),
                GraphEdge::new(NodeId(8), "ON", NodeId(3)),
                GraphEdge::new(NodeId(9), "ON", NodeId(3)),
            ],
        )
        .unwrap()
    }

    fn plan(lines: &[&str]) -> Plan {
        let r = TemplateRegistry::builtin();
        Plan {
            task: "test".into(),
            steps: lines.iter().map(|l| parse_script_line(l, &r).unwrap()).collect(),
        }
    }

    fn step(line: &str) -> ActionStep {
        parse_script_line(line, &TemplateRegistry::builtin()).unwrap()
    }

    #[test]
    fn grab_when_close() {
        let env = scene();
        let (env, agent) = execute_step(&env, &AgentState::observe(&env, NodeId(2)), &step("[Walk] <table> (3)")).unwrap();
        assert!(agent.close_to.contains(&NodeId(7)));
        let (after, agent) = execute_step(&env, &agent, &step("[Grab] <plate> (7)")).unwrap();
        assert_eq!(agent.held, BTreeSet::from([NodeId(7)]));
        assert!(after.has_edge(NodeId(2), "HOLDS", NodeId(7)));
        assert!(!after.has_edge(NodeId(7), "ON", NodeId(3)));
    }

    #[test]
    fn grab_with_full_hands_fails() {
        let p = plan(&[
            "[Walk] <table> (3)",
            "[Grab] <plate> (7)",
            "[Grab] <cup> (8)",
            "[Grab] <glass> (9)",
        ]);
        let trace = execute_plan(&scene(), &p);
        assert_eq!(trace.ok_steps(), 3);
        assert_eq!(trace.step_results[3].reason.as_deref(), Some("require_free_hand violated"));
    }

    #[test]
    fn open_already_open_fails() {
        let env = scene();
        let (env, agent) = execute_step(&env, &AgentState::observe(&env, NodeId(2)), &step("[Walk] <fridge> (5)")).unwrap();
        let err = execute_step(&env, &agent, &step("[Open] <fridge> (5)")).unwrap_err();
        assert_eq!(err.to_string(), "require_state closed (OBJ0) violated");
        let (env, agent) = execute_step(&env, &agent, &step("[Close] <fridge> (5)")).unwrap();
        assert!(env.node(NodeId(5)).unwrap().states.contains("closed"));
        execute_step(&env, &agent, &step("[Open] <fridge> (5)")).unwrap();
    }

    #[test]
    fn missing_nodes_fail_cleanly() {
        let env = scene();
        let agent = AgentState::observe(&env, NodeId(2));
        assert_eq!(
            execute_step(&env, &agent, &step("[Walk] <tv> (0)")),
            Err(StepFailure::MissingNode(NodeId(0)))
        );
        let loose = ActionStep::new(TemplateRegistry::builtin().get("Walk").unwrap().clone(), vec!["tv".into()]);
        assert_eq!(execute_step(&env, &agent, &loose), Err(StepFailure::Ungrounded));
    }

    #[test]
    fn plan_folding() {
        let env = scene();
        let empty = execute_plan(&env, &Plan::new("nothing"));
        assert!(empty.step_results.is_empty());
        assert_eq!(empty.final_env, env);
        assert_eq!(executability::<f64>(&empty, &Plan::new("nothing")), 0.0);

        let first_fails = plan(&["[Grab] <plate> (7)", "[Walk] <table> (3)"]);
        let trace = execute_plan(&env, &first_fails);
        assert_eq!(trace.ok_steps(), 0);
        assert_eq!(trace.step_results.len(), 1);
        assert_eq!(trace.final_env, env);

        let p = plan(&["[Walk] <table> (3)", "[Grab] <plate> (7)", "[Open] <fridge> (5)", "[Walk] <kitchen> (1)"]);
        let trace = execute_plan(&env, &p);
        assert_eq!(trace.ok_steps(), 2);
        assert_eq!(trace.step_results.len(), 3);
        let two = execute_plan(&env, &plan(&["[Walk] <table> (3)", "[Grab] <plate> (7)"]));
        assert_eq!(trace.final_env, two.final_env);
        assert_eq!(executability::<f64>(&trace, &p), 50.0);
        assert_eq!(executability::<f32>(&two, &plan(&["[Walk] <table> (3)", "[Grab] <plate> (7)"])), 100.0);
    }

    #[test]
    fn synthetic_agent() {
        let env = EnvironmentGraph::new(
            vec![GraphNode::new(4, "lamp").with_properties(&["has_switch"]).with_states(&["off"])],
            vec![],
        )
        .unwrap();
        let trace = execute_plan(&env, &plan(&["[Walk] <lamp> (4)", "[SwitchOn] <lamp> (4)"]));
        assert_eq!(trace.ok_steps(), 2);
        let agent = trace.final_agent.unwrap();
        assert_eq!(agent.agent_node_id, NodeId(5));
        assert_eq!(trace.final_env.node(NodeId(5)).unwrap().category, AGENT_CATEGORY);
    }

    #[test]
    fn frame_property_on_scene() {
        let env = scene();
        let p = plan(&[
            "[Walk] <table> (3)",
            "[Grab] <plate> (7)",
            "[Walk] <fridge> (5)",
            "[PutIn] <plate> (7) <fridge> (5)",
            "[Close] <fridge> (5)",
        ]);
        let mut cur = env.clone();
        let mut agent = AgentState::observe(&env, NodeId(2));
        for s in &p.steps {
            let (next, next_agent) = execute_step(&cur, &agent, s).unwrap();
            let allowed = effect_footprint(s, &agent);
            for id in next.nodes().iter().map(|n| n.id) {
                if cur.node(id) != next.node(id) {
                    assert!(allowed.contains(&id));
                }
            }
            let d = graph_diff(&cur, &next);
            let touched = |sig: &str| allowed.iter().any(|id| sig.contains(&format!("#{id}|")) || sig.ends_with(&format!("#{id}")));
            assert!(d.edges.iter().all(|sig| touched(sig)), "{:?}", d.edges);
            cur = next;
            agent = next_agent;
        }
    }

    #[test]
    fn trace_export() {
        let trace = execute_plan(&scene(), &plan(&["[Walk] <table> (3)", "[Open] <fridge> (5)"]));
        let text = trace.to_jsonl();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], r#"{"step":"[Walk] <table> (3)","ok":true,"reason":null}"#);
        assert!(lines[1].starts_with(r#"{"step":"[Open] <fridge> (5)","ok":false,"reason":"require_edge AGENT CLOSE OBJ0"#));
    }
}
