//! Heterogeneous graph: typed nodes, typed directed relations paired with
//! their reverses, and per-node in-edge lists.
//!
//! Node ids are type-major: all nodes of type 0 come first, then type 1,
//! and so on, so the per-type feature matrices are contiguous slices of the
//! global id range. A [`HetGraph`] is immutable once built.

mod builder;
mod tsv;

use std::collections::HashMap;
use std::path::PathBuf;

use crate::autodiff::Tensor;

pub use builder::{build_graph, EdgeSpec, GraphSpec, NodeSpec, RelationSpec};
pub use tsv::{load_tsv, save_tsv, TsvPaths};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeType {
    pub id: usize,
    pub name: String,
    pub feature_dim: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationType {
    pub id: usize,
    pub name: String,
    pub src_type: usize,
    pub dst_type: usize,
    /// Id of the reverse relation; equal to `id` for self-reverse relations.
    pub reverse: usize,
    pub is_self_loop: bool,
}

impl RelationType {
    /// Self-loops and symmetric relations (e.g. co-authorship) are their
    /// own reverse.
    pub fn is_self_reverse(&self) -> bool {
        self.reverse == self.id
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeTriplet {
    pub src: usize,
    pub dst: usize,
    pub rel: usize,
}

/// Class labels for the nodes of one type, indexed by local node index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Labels {
    pub classes: usize,
    pub values: Vec<Option<usize>>,
}

impl Labels {
    /// `(local index, class)` for every labeled node.
    pub fn labeled(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.values.iter().enumerate().filter_map(|(i, v)| v.map(|c| (i, c)))
    }
}

/// Layer-0 state for node types without attribute features.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ColdStart {
    /// A single zero feature per node.
    Zeros,
    /// Identity features, one dimension per node of the type.
    #[default]
    OneHot,
}

impl std::str::FromStr for ColdStart {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zeros" => Ok(Self::Zeros),
            "onehot" => Ok(Self::OneHot),
            other => Err(format!("unknown cold-start policy `{other}` (expected zeros|onehot)")),
        }
    }
}

impl std::fmt::Display for ColdStart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Zeros => "zeros",
            Self::OneHot => "onehot",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("unknown node type `{0}`")]
    UnknownNodeType(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("duplicate node type `{0}`")]
    DuplicateNodeType(String),
    #[error("duplicate relation `{0}`")]
    DuplicateRelation(String),
    #[error("edge {src} -[{rel}]-> {dst} contradicts the relation's endpoint types")]
    EdgeTypeMismatch { src: String, dst: String, rel: String },
    #[error("relation `{0}` is its own reverse but joins two different node types")]
    SelfReverseTypeMismatch(String),
    #[error("relation `{rel}` and its reverse `{reverse}` disagree")]
    InconsistentReverse { rel: String, reverse: String },
    #[error("self-loops were already added")]
    SelfLoopsAlreadyAdded,
    #[error("node id {0} out of range")]
    InvalidNode(usize),
    #[error("node type `{node_type}`: feature dimension {found} differs from {expected}")]
    FeatureDimMismatch { node_type: String, expected: usize, found: usize },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Clone, Debug)]
pub struct HetGraph {
    node_types: Vec<NodeType>,
    relations: Vec<RelationType>,
    /// `type_offsets[p]..type_offsets[p + 1]` are the global ids of type `p`.
    type_offsets: Vec<usize>,
    node_names: Vec<String>,
    node_type: Vec<usize>,
    name_index: HashMap<String, usize>,
    edges: Vec<EdgeTriplet>,
    in_edges: Vec<Vec<usize>>,
    features: Vec<Tensor>,
    /// Types whose features came from the cold-start policy.
    cold_start: Vec<bool>,
    labels: Vec<Option<Labels>>,
}

impl HetGraph {
    pub fn node_types(&self) -> &[NodeType] {
        &self.node_types
    }

    pub fn relations(&self) -> &[RelationType] {
        &self.relations
    }

    pub fn relation(&self, id: usize) -> &RelationType {
        &self.relations[id]
    }

    pub fn num_types(&self) -> usize {
        self.node_types.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.node_type.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn count(&self, node_type: usize) -> usize {
        self.type_offsets[node_type + 1] - self.type_offsets[node_type]
    }

    pub fn type_of(&self, node: usize) -> usize {
        self.node_type[node]
    }

    /// Index of `node` within its type's block.
    pub fn local_index(&self, node: usize) -> usize {
        node - self.type_offsets[self.node_type[node]]
    }

    pub fn global_id(&self, node_type: usize, local: usize) -> usize {
        debug_assert!(local < self.count(node_type));
        self.type_offsets[node_type] + local
    }

    pub fn node_name(&self, node: usize) -> &str {
        &self.node_names[node]
    }

    pub fn node_by_name(&self, name: &str) -> Option<usize> {
        self.name_index.get(name).copied()
    }

    pub fn node_type_by_name(&self, name: &str) -> Option<usize> {
        self.node_types.iter().position(|t| t.name == name)
    }

    pub fn relation_by_name(&self, name: &str) -> Option<usize> {
        self.relations.iter().position(|r| r.name == name)
    }

    pub fn edges(&self) -> &[EdgeTriplet] {
        &self.edges
    }

    /// Indices into [`edges`](Self::edges) of every edge whose target is `node`.
    pub fn in_edge_ids(&self, node: usize) -> Result<&[usize], GraphError> {
        self.in_edges.get(node).map(Vec::as_slice).ok_or(GraphError::InvalidNode(node))
    }

    /// The edges `(i, node, r)`, parallel relations included.
    pub fn in_edges(&self, node: usize) -> Result<Vec<EdgeTriplet>, GraphError> {
        Ok(self.in_edge_ids(node)?.iter().map(|&e| self.edges[e]).collect())
    }

    /// `count(p) × feature_dim(p)` layer-0 states.
    pub fn features(&self, node_type: usize) -> &Tensor {
        &self.features[node_type]
    }

    pub fn is_cold_start(&self, node_type: usize) -> bool {
        self.cold_start[node_type]
    }

    pub fn labels(&self, node_type: usize) -> Option<&Labels> {
        self.labels[node_type].as_ref()
    }

    /// Types carrying at least one label.
    pub fn labeled_types(&self) -> Vec<usize> {
        (0..self.num_types())
            .filter(|&p| self.labels[p].as_ref().is_some_and(|l| l.labeled().next().is_some()))
            .collect()
    }

    pub fn has_self_loops(&self) -> bool {
        self.relations.iter().any(|r| r.is_self_loop)
    }

    pub fn self_loop_relation(&self, node_type: usize) -> Option<usize> {
        self.relations.iter().position(|r| r.is_self_loop && r.src_type == node_type)
    }

    /// Adds one self-loop relation per node type and one self-loop edge per
    /// node. Existing edges keep their indices.
    pub fn add_self_loops(&self) -> Result<HetGraph, GraphError> {
        if self.has_self_loops() {
            return Err(GraphError::SelfLoopsAlreadyAdded);
        }
        let mut g = self.clone();
        for p in 0..g.num_types() {
            let id = g.relations.len();
            let mut name = format!("self-{}", g.node_types[p].name);
            while g.relations.iter().any(|r| r.name == name) {
                name.push('_');
            }
            g.relations.push(RelationType {
                id,
                name,
                src_type: p,
                dst_type: p,
                reverse: id,
                is_self_loop: true,
            });
            for node in g.type_offsets[p]..g.type_offsets[p + 1] {
                g.in_edges[node].push(g.edges.len());
                g.edges.push(EdgeTriplet { src: node, dst: node, rel: id });
            }
        }
        Ok(g)
    }

    /// The same graph with a different feature matrix for one type.
    pub fn with_features(&self, node_type: usize, features: Tensor) -> Result<HetGraph, GraphError> {
        if features.rows() != self.count(node_type) {
            return Err(GraphError::FeatureDimMismatch {
                node_type: self.node_types[node_type].name.clone(),
                expected: self.count(node_type),
                found: features.rows(),
            });
        }
        let mut g = self.clone();
        g.node_types[node_type].feature_dim = features.cols();
        g.features[node_type] = features;
        g.cold_start[node_type] = false;
        Ok(g)
    }
}

#[cfg(test)]
mod tests;
