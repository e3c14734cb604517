use super::*;
use crate::env_graph::{GraphEdge, GraphNode};
use crate::example_store::stub_corpus;
use crate::lm::StubBackend;
use crate::script::parse_script_line;
use proptest::prelude::*;

fn table_scene(plates: usize, cups: usize) -> EnvironmentGraph {
    let mut nodes = vec![
        GraphNode::new(1, "dining_room").with_properties(&["room"]),
        GraphNode::new(2, "character"),
        GraphNode::new(3, "kitchen_counter").with_properties(&["surface"]).at(0.0, 0.0, 0.0),
        GraphNode::new(4, "table").with_properties(&["surface"]).at(4.0, 0.0, 0.0),
    ];
    let mut edges = vec![
        GraphEdge::new(NodeId(2), "INSIDE", NodeId(1)),
        GraphEdge::new(NodeId(3), "INSIDE", NodeId(1)),
        GraphEdge::new(NodeId(4), "INSIDE", NodeId(1)),
    ];
    let mut id = 10;
    for (category, count) in [("plate", plates), ("cup", cups)] {
        for i in 0..count {
            nodes.push(
                GraphNode::new(id, category)
                    .with_properties(&["grabbable"])
                    .at(0.1 * i as f64, 0.2, 0.0),
            );
            edges.push(GraphEdge::new(NodeId(id), "ON", NodeId(3)));
            id += 1;
        }
    }
    EnvironmentGraph::new(nodes, edges).unwrap()
}

fn record(task: &str, lines: &[String], env: EnvironmentGraph) -> ExampleRecord {
    let r = TemplateRegistry::builtin();
    ExampleRecord {
        task: task.into(),
        description: None,
        plan: Plan {
            task: task.into(),
            steps: lines.iter().map(|l| parse_script_line(l, &r).unwrap()).collect(),
        },
        env_before: env,
        env_after: None,
        source_line: 1,
    }
}

fn table_rounds(rounds: usize) -> Vec<String> {
    let mut lines = Vec::new();
    for i in 0..rounds as u32 {
        lines.push("[Walk] <kitchen_counter> (3)".to_string());
        lines.push(format!("[Grab] <plate> ({})", 10 + i));
        lines.push("[Walk] <table> (4)".to_string());
        lines.push(format!("[PutBack] <plate> ({}) <table> (4)", 10 + i));
    }
    lines
}

fn plan_with(store: &[ExampleRecord], task: &str, env: &EnvironmentGraph, config: &PlannerConfig) -> (Plan, SessionLog) {
    let lm = StubBackend::new(stub_corpus(store));
    let registry = TemplateRegistry::builtin();
    let layout = PromptLayout::default();
    Planner::new(&lm, &registry, &layout, config)
        .generate_plan(task, env, store)
        .unwrap()
}

fn distinct(plan: &Plan, verb: &str) -> usize {
    let ids: std::collections::BTreeSet<_> = plan
        .steps
        .iter()
        .filter(|s| s.verb() == verb)
        .map(|s| s.object_ids.clone())
        .collect();
    ids.len()
}

#[test]
fn repetition_binds_distinct_plates() {
    for n in 2..=4 {
        let store = vec![record("arrange plates", &table_rounds(n), table_scene(n, 0))];
        let env = table_scene(n, 0);
        let (plan, log) = plan_with(&store, "set out plates", &env, &PlannerConfig::default());
        assert_eq!(plan.len(), 4 * n, "{}", log.to_json());
        assert_eq!(distinct(&plan, "Grab"), n);
        let trace = crate::executor::execute_plan(&env, &plan);
        assert_eq!(trace.ok_steps(), plan.len(), "{:?}", trace.step_results);
    }
}

#[test]
fn random_binding_reuses_one_plate() {
    let store = vec![record("arrange plates", &table_rounds(3), table_scene(3, 0))];
    let env = table_scene(3, 0);
    for seed in 0..5 {
        let config = PlannerConfig {
            seed,
            ..PlannerConfig::baseline()
        };
        let (plan, _) = plan_with(&store, "set out plates", &env, &config);
        assert_eq!(distinct(&plan, "Grab"), 1);
    }
}

#[test]
fn infinite_cutoff_gives_null_plan() {
    let store = vec![record("arrange plates", &table_rounds(1), table_scene(1, 0))];
    let config = PlannerConfig {
        cutoff: f64::INFINITY,
        ..PlannerConfig::default()
    };
    let (plan, log) = plan_with(&store, "set out plates", &table_scene(1, 0), &config);
    assert!(plan.is_empty());
    assert_eq!(log.termination, Termination::BelowCutoff);
}

#[test]
fn missing_objects_give_null_plan() {
    let lines = vec![
        "[Walk] <bedroom> (1)".to_string(),
        "[Walk] <bed> (2)".to_string(),
        "[Sit] <bed> (2)".to_string(),
    ];
    let bedroom = EnvironmentGraph::new(
        vec![
            GraphNode::new(1, "bedroom").with_properties(&["room"]),
            GraphNode::new(2, "bed").with_properties(&["sittable"]),
        ],
        vec![GraphEdge::new(NodeId(2), "INSIDE", NodeId(1))],
    )
    .unwrap();
    let store = vec![record("go to bed", &lines, bedroom)];
    let garage = EnvironmentGraph::new(
        vec![
            GraphNode::new(1, "garage").with_properties(&["room"]),
            GraphNode::new(2, "shovel"),
            GraphNode::new(3, "wrench"),
        ],
        vec![],
    )
    .unwrap();
    let (plan, log) = plan_with(&store, "go to sleep", &garage, &PlannerConfig::default());
    assert!(plan.is_empty(), "{}", log.to_json());
}

#[test]
fn deterministic_and_bounded() {
    let store = vec![record("arrange plates", &table_rounds(3), table_scene(3, 0))];
    let env = table_scene(3, 0);
    let a = plan_with(&store, "set out plates", &env, &PlannerConfig::default());
    let b = plan_with(&store, "set out plates", &env, &PlannerConfig::default());
    assert_eq!(a.0, b.0);
    assert_eq!(a.1.to_json(), b.1.to_json());

    let short = PlannerConfig {
        max_steps: 5,
        ..PlannerConfig::default()
    };
    let (plan, log) = plan_with(&store, "set out plates", &env, &short);
    assert_eq!(plan.len(), 5);
    assert_eq!(log.termination, Termination::MaxSteps);
}

#[test]
fn candidates_are_consistent() {
    let store = vec![record("arrange plates", &table_rounds(2), table_scene(2, 0))];
    let config = PlannerConfig::default();
    let (_, log) = plan_with(&store, "set out plates", &table_scene(2, 0), &config);
    let w = config.weights();
    for step in &log.steps {
        for c in &step.candidates {
            assert!(scoring::range_violations(&c.scores, c.penalty, c.total, &w).is_empty());
        }
        assert!(step.candidates.windows(2).all(|p| p[0].total >= p[1].total));
    }
}

#[test]
fn zero_weights_keep_enumeration_order() {
    let store = vec![record("arrange plates", &table_rounds(2), table_scene(2, 0))];
    let config = PlannerConfig {
        w_a: 0.0,
        w_am: 0.0,
        w_o: 0.0,
        w_om: 0.0,
        w_od: 0.0,
        action_repeat_penalty: 0.0,
        pair_repeat_penalty: 0.0,
        max_steps: 3,
        ..PlannerConfig::default()
    };
    let (_, log) = plan_with(&store, "set out plates", &table_scene(2, 0), &config);
    for step in &log.steps {
        assert!(step.candidates.iter().all(|c| c.total == 0.0));
        assert!(step.candidates.windows(2).all(|p| p[0].sample_index <= p[1].sample_index));
    }
}

#[test]
fn config_validation() {
    assert!(PlannerConfig::default().validate().is_ok());
    assert!(PlannerConfig { k: 0, ..PlannerConfig::default() }.validate().is_err());
    assert!(PlannerConfig { w_a: -1.0, ..PlannerConfig::default() }.validate().is_err());
    assert!(PlannerConfig { temperature: 0.0, ..PlannerConfig::default() }.validate().is_err());
    assert!(PlannerConfig { w_om: f64::NAN, ..PlannerConfig::default() }.validate().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn plans_respect_max_steps(max_steps in 1usize..12, seed in 0u64..1000) {
        let store = vec![record("arrange plates", &table_rounds(3), table_scene(3, 0))];
        let config = PlannerConfig { max_steps, seed, ..PlannerConfig::default() };
        let (plan, _) = plan_with(&store, "set out plates", &table_scene(3, 0), &config);
        prop_assert!(plan.len() <= max_steps);
        prop_assert!(plan.steps.iter().all(|s| s.is_grounded()));
    }
}
