//! Grounded task planning: rank language-model action candidates against a
//! symbolic household environment, execute the resulting plans, and score
//! them.

pub mod env_graph;
pub mod example_store;
pub mod executor;
pub mod lm;
pub mod metrics;
pub mod planner;
pub mod prompt;
pub mod scalar;
pub mod script;

pub use env_graph::{EnvironmentGraph, GraphEdge, GraphNode, NodeId};
pub use example_store::{DatasetSplit, ExampleRecord};
pub use lm::LanguageModel;
pub use planner::{Planner, PlannerConfig};
pub use script::{ActionStep, Plan, TemplateRegistry};

/// Pipeline scalar.
pub type Score = f64;
pub type Embedding = lm::Embedding<Score>;
pub type Components = planner::Components<Score>;
pub type Weights = planner::Weights<Score>;
pub type EvalResult = metrics::EvalResult<Score>;
pub type Aggregate = metrics::Aggregate<Score>;
