//! Environment graphs: objects with states and properties, joined by
//! relation edges.
//!
//! Graphs are values. Nothing in this module mutates a graph in place through
//! the public API; the executor works on clones through the crate-private
//! editing helpers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("nodes[{index}]: duplicate node id {id}")]
    DuplicateNode { index: usize, id: NodeId },
    #[error("nodes[{index}]: node id must be positive")]
    ZeroId { index: usize },
    #[error("nodes[{index}].category: must be nonempty")]
    EmptyCategory { index: usize },
    #[error("edges[{index}].{field}: node {id} does not exist")]
    DanglingEdge {
        index: usize,
        field: &'static str,
        id: NodeId,
    },
    #[error("edges[{index}]: duplicate edge {from} {relation} {to}")]
    DuplicateEdge {
        index: usize,
        from: NodeId,
        relation: String,
        to: NodeId,
    },
    #[error("edge endpoint {0} does not exist")]
    MissingEndpoint(NodeId),
    #[error("environment json (line {line}, column {column}): {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
}

impl From<serde_json::Error> for GraphError {
    fn from(err: serde_json::Error) -> Self {
        GraphError::Json {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: NodeId,
    pub category: String,
    #[serde(default)]
    pub states: BTreeSet<String>,
    #[serde(default)]
    pub properties: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<[f64; 3]>,
}

impl GraphNode {
    pub fn new(id: u32, category: &str) -> Self {
        GraphNode {
            id: NodeId(id),
            category: category.to_lowercase(),
            states: BTreeSet::new(),
            properties: BTreeSet::new(),
            position: None,
        }
    }

    pub fn with_states(mut self, states: &[&str]) -> Self {
        self.states = states.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn with_properties(mut self, props: &[&str]) -> Self {
        self.properties = props.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn at(mut self, x: f64, y: f64, z: f64) -> Self {
        self.position = Some([x, y, z]);
        self
    }

    pub fn has_property(&self, property: &str) -> bool {
        self.properties.contains(property)
    }

    /// Euclidean distance between positions, if both nodes have one.
    pub fn distance_to(&self, other: &GraphNode) -> Option<f64> {
        let (a, b) = (self.position?, other.position?);
        Some(
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GraphEdge {
    pub from_id: NodeId,
    pub relation: String,
    pub to_id: NodeId,
}

impl GraphEdge {
    pub fn new(from: NodeId, relation: &str, to: NodeId) -> Self {
        GraphEdge {
            from_id: from,
            relation: relation.to_uppercase(),
            to_id: to,
        }
    }
}

#[derive(Deserialize)]
struct RawGraph {
    #[serde(default)]
    nodes: Vec<GraphNode>,
    #[serde(default)]
    edges: Vec<GraphEdge>,
}

/// The world model: a validated set of nodes and relation edges.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawGraph")]
pub struct EnvironmentGraph {
    nodes: Vec<GraphNode>,
    edges: Vec<GraphEdge>,
    #[serde(skip)]
    index: BTreeMap<NodeId, usize>,
}

impl TryFrom<RawGraph> for EnvironmentGraph {
    type Error = GraphError;

    fn try_from(raw: RawGraph) -> Result<Self, Self::Error> {
        EnvironmentGraph::new(raw.nodes, raw.edges)
    }
}

impl PartialEq for EnvironmentGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }
}

impl EnvironmentGraph {
    /// Validates and builds a graph. Categories are lowercased and relations
    /// uppercased on the way in.
    pub fn new(nodes: Vec<GraphNode>, edges: Vec<GraphEdge>) -> Result<Self, GraphError> {
        let mut index = BTreeMap::new();
        let mut nodes = nodes;
        for (i, node) in nodes.iter_mut().enumerate() {
            node.category = node.category.trim().to_lowercase();
            if node.id.0 == 0 {
                return Err(GraphError::ZeroId { index: i });
            }
            if node.category.is_empty() {
                return Err(GraphError::EmptyCategory { index: i });
            }
            if index.insert(node.id, i).is_some() {
                return Err(GraphError::DuplicateNode { index: i, id: node.id });
            }
        }
        let mut seen = BTreeSet::new();
        let mut edges = edges;
        for (i, edge) in edges.iter_mut().enumerate() {
            edge.relation = edge.relation.trim().to_uppercase();
            if !index.contains_key(&edge.from_id) {
                return Err(GraphError::DanglingEdge {
                    index: i,
                    field: "from_id",
                    id: edge.from_id,
                });
            }
            if !index.contains_key(&edge.to_id) {
                return Err(GraphError::DanglingEdge {
                    index: i,
                    field: "to_id",
                    id: edge.to_id,
                });
            }
            if !seen.insert(edge.clone()) {
                return Err(GraphError::DuplicateEdge {
                    index: i,
                    from: edge.from_id,
                    relation: edge.relation.clone(),
                    to: edge.to_id,
                });
            }
        }
        Ok(EnvironmentGraph { nodes, edges, index })
    }

    pub fn empty() -> Self {
        EnvironmentGraph {
            nodes: Vec::new(),
            edges: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let raw: RawGraph = serde_json::from_str(text)?;
        EnvironmentGraph::new(raw.nodes, raw.edges)
    }

    pub fn load(path: &Path) -> Result<Self, GraphError> {
        let text = std::fs::read_to_string(path).map_err(|e| GraphError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("graph serializes")
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[GraphEdge] {
        &self.edges
    }

    pub fn node(&self, id: NodeId) -> Option<&GraphNode> {
        self.index.get(&id).map(|&i| &self.nodes[i])
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn has_edge(&self, from: NodeId, relation: &str, to: NodeId) -> bool {
        self.edges
            .iter()
            .any(|e| e.from_id == from && e.to_id == to && e.relation == relation)
    }

    /// Targets of outgoing `relation` edges from `from`.
    pub fn targets(&self, from: NodeId, relation: &str) -> Vec<NodeId> {
        self.edges
            .iter()
            .filter(|e| e.from_id == from && e.relation == relation)
            .map(|e| e.to_id)
            .collect()
    }

    /// Sources of incoming `relation` edges into `to`.
    pub fn sources(&self, relation: &str, to: NodeId) -> Vec<NodeId> {
        self.edges
            .iter()
            .filter(|e| e.to_id == to && e.relation == relation)
            .map(|e| e.from_id)
            .collect()
    }

    /// Nodes of the given category, in graph order.
    pub fn nodes_of_category<'a>(&'a self, category: &'a str) -> impl Iterator<Item = &'a GraphNode> {
        self.nodes.iter().filter(move |n| n.category == category)
    }

    /// Distinct categories in first-appearance order.
    pub fn categories(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.nodes
            .iter()
            .filter(|n| seen.insert(n.category.as_str()))
            .map(|n| n.category.as_str())
            .collect()
    }

    pub fn max_id(&self) -> u32 {
        self.nodes.iter().map(|n| n.id.0).max().unwrap_or(0)
    }

    pub(crate) fn node_mut(&mut self, id: NodeId) -> Option<&mut GraphNode> {
        let i = *self.index.get(&id)?;
        Some(&mut self.nodes[i])
    }

    pub(crate) fn insert_node(&mut self, node: GraphNode) -> Result<(), GraphError> {
        if self.index.contains_key(&node.id) {
            return Err(GraphError::DuplicateNode {
                index: self.nodes.len(),
                id: node.id,
            });
        }
        self.index.insert(node.id, self.nodes.len());
        self.nodes.push(node);
        Ok(())
    }

    /// Adds an edge if absent. Returns whether the graph changed.
    pub(crate) fn add_edge(&mut self, from: NodeId, relation: &str, to: NodeId) -> Result<bool, GraphError> {
        for id in [from, to] {
            if !self.contains(id) {
                return Err(GraphError::MissingEndpoint(id));
            }
        }
        if self.has_edge(from, relation, to) {
            return Ok(false);
        }
        self.edges.push(GraphEdge::new(from, relation, to));
        Ok(true)
    }

    /// Removes every edge matching the pattern; `None` endpoints match anything.
    pub(crate) fn remove_edges(&mut self, from: Option<NodeId>, relation: &str, to: Option<NodeId>) -> usize {
        let before = self.edges.len();
        self.edges.retain(|e| {
            !(e.relation == relation
                && from.is_none_or(|f| e.from_id == f)
                && to.is_none_or(|t| e.to_id == t))
        });
        before - self.edges.len()
    }
}

/// Cross-graph identity of a node: category plus sorted states.
pub fn node_signature(node: &GraphNode) -> String {
    let states: Vec<&str> = node.states.iter().map(String::as_str).collect();
    format!("{}|{}", node.category, states.join(","))
}

/// Cross-graph identity of an edge, rendered with endpoint categories.
pub fn edge_signature(edge: &GraphEdge, graph: &EnvironmentGraph) -> Result<String, GraphError> {
    let from = graph
        .node(edge.from_id)
        .ok_or(GraphError::MissingEndpoint(edge.from_id))?;
    let to = graph
        .node(edge.to_id)
        .ok_or(GraphError::MissingEndpoint(edge.to_id))?;
    Ok(format!("{}|{}|{}", from.category, edge.relation, to.category))
}

pub fn node_signatures(graph: &EnvironmentGraph) -> BTreeSet<String> {
    graph.nodes().iter().map(node_signature).collect()
}

pub fn edge_signatures(graph: &EnvironmentGraph) -> BTreeSet<String> {
    graph
        .edges()
        .iter()
        .map(|e| edge_signature(e, graph).expect("validated graph has no dangling edges"))
        .collect()
}

/// Intersection over union of two sets; two empty sets agree perfectly.
pub fn iou<T: Ord, F: Real>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> F {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        return F::one();
    }
    F::count(inter) / F::count(union)
}

/// Scene similarity in `[0, 2]`: node-signature IoU plus edge-signature IoU.
pub fn env_similarity<F: Real>(a: &EnvironmentGraph, b: &EnvironmentGraph) -> F {
    iou::<_, F>(&node_signatures(a), &node_signatures(b))
        + iou::<_, F>(&edge_signatures(a), &edge_signatures(b))
}

/// Changed nodes and edges between two snapshots of the same environment.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct GraphDiff {
    pub nodes: BTreeSet<String>,
    pub edges: BTreeSet<String>,
}

impl GraphDiff {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty() && self.edges.is_empty()
    }
}

fn id_node_signature(node: &GraphNode) -> String {
    format!("{}#{}", node_signature(node), node.id)
}

fn id_edge_signature(edge: &GraphEdge, graph: &EnvironmentGraph) -> String {
    let cat = |id: NodeId| graph.node(id).map(|n| n.category.as_str()).unwrap_or("?");
    format!(
        "{}#{}|{}|{}#{}",
        cat(edge.from_id),
        edge.from_id,
        edge.relation,
        cat(edge.to_id),
        edge.to_id
    )
}

/// Symmetric difference of id-augmented node and edge signatures.
///
/// A node whose states changed contributes both its before and after
/// signature.
pub fn graph_diff(initial: &EnvironmentGraph, final_env: &EnvironmentGraph) -> GraphDiff {
    let sym = |a: BTreeSet<String>, b: BTreeSet<String>| -> BTreeSet<String> {
        a.symmetric_difference(&b).cloned().collect()
    };
    let nodes_a: BTreeSet<String> = initial.nodes().iter().map(id_node_signature).collect();
    let nodes_b: BTreeSet<String> = final_env.nodes().iter().map(id_node_signature).collect();
    let edges_a: BTreeSet<String> = initial
        .edges()
        .iter()
        .map(|e| id_edge_signature(e, initial))
        .collect();
    let edges_b: BTreeSet<String> = final_env
        .edges()
        .iter()
        .map(|e| id_edge_signature(e, final_env))
        .collect();
    GraphDiff {
        nodes: sym(nodes_a, nodes_b),
        edges: sym(edges_a, edges_b),
    }
}
