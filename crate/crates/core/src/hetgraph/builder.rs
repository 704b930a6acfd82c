use std::collections::{HashMap, HashSet};

use log::warn;

use super::{ColdStart, EdgeTriplet, GraphError, HetGraph, Labels, NodeType, RelationType};
use crate::autodiff::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct NodeSpec {
    pub name: String,
    pub node_type: String,
    pub label: Option<usize>,
    pub features: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationSpec {
    pub name: String,
    pub src_type: String,
    pub dst_type: String,
    /// Name of the reverse relation. A reverse that is not itself declared
    /// is synthesized with swapped endpoint types.
    pub reverse: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeSpec {
    pub src: String,
    pub dst: String,
    pub relation: String,
}

/// Name-level description of a graph, as read from files or generated.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GraphSpec {
    pub node_types: Vec<String>,
    pub nodes: Vec<NodeSpec>,
    pub relations: Vec<RelationSpec>,
    pub edges: Vec<EdgeSpec>,
}

impl GraphSpec {
    /// Resolves names, synthesizes missing reverse relations and reverse
    /// edges, and builds the in-edge index. Duplicate `(i, j, r)` triplets
    /// are dropped with a warning.
    pub fn build(&self, cold_start: ColdStart) -> Result<HetGraph, GraphError> {
        let mut type_index = HashMap::new();
        for (i, name) in self.node_types.iter().enumerate() {
            if type_index.insert(name.as_str(), i).is_some() {
                return Err(GraphError::DuplicateNodeType(name.clone()));
            }
        }
        let num_types = self.node_types.len();
        let lookup_type = |name: &str| {
            type_index.get(name).copied().ok_or_else(|| GraphError::UnknownNodeType(name.to_string()))
        };

        // Type-major ordering, stable within a type.
        let mut per_type: Vec<Vec<&NodeSpec>> = vec![Vec::new(); num_types];
        for n in &self.nodes {
            per_type[lookup_type(&n.node_type)?].push(n);
        }
        let mut type_offsets = vec![0];
        let mut node_names = Vec::with_capacity(self.nodes.len());
        let mut node_type = Vec::with_capacity(self.nodes.len());
        let mut name_index = HashMap::with_capacity(self.nodes.len());
        for (p, nodes) in per_type.iter().enumerate() {
            for n in nodes {
                if name_index.insert(n.name.clone(), node_names.len()).is_some() {
                    return Err(GraphError::DuplicateNode(n.name.clone()));
                }
                node_names.push(n.name.clone());
                node_type.push(p);
            }
            type_offsets.push(node_names.len());
        }

        let mut node_types = Vec::with_capacity(num_types);
        let mut features = Vec::with_capacity(num_types);
        let mut cold = Vec::with_capacity(num_types);
        let mut labels = Vec::with_capacity(num_types);
        for (p, nodes) in per_type.iter().enumerate() {
            let type_name = &self.node_types[p];
            let (feat, is_cold) = type_features(type_name, nodes, cold_start)?;
            node_types.push(NodeType { id: p, name: type_name.clone(), feature_dim: feat.cols() });
            features.push(feat);
            cold.push(is_cold);
            let values: Vec<Option<usize>> = nodes.iter().map(|n| n.label).collect();
            let max = values.iter().flatten().max().copied();
            labels.push(max.map(|m| Labels { classes: m + 1, values }));
        }

        let relations = resolve_relations(&self.relations, &lookup_type)?;
        let rel_index: HashMap<&str, usize> =
            relations.iter().map(|r| (r.name.as_str(), r.id)).collect();

        let mut seen = HashSet::new();
        let mut duplicates = 0usize;
        let mut edges = Vec::with_capacity(self.edges.len() * 2);
        for e in &self.edges {
            let node = |name: &str| {
                name_index.get(name).copied().ok_or_else(|| GraphError::UnknownNode(name.to_string()))
            };
            let (src, dst) = (node(&e.src)?, node(&e.dst)?);
            let rel = *rel_index
                .get(e.relation.as_str())
                .ok_or_else(|| GraphError::UnknownRelation(e.relation.clone()))?;
            let r = &relations[rel];
            if node_type[src] != r.src_type || node_type[dst] != r.dst_type {
                return Err(GraphError::EdgeTypeMismatch {
                    src: e.src.clone(),
                    dst: e.dst.clone(),
                    rel: e.relation.clone(),
                });
            }
            let canonical = if r.is_self_reverse() {
                EdgeTriplet { src: src.min(dst), dst: src.max(dst), rel }
            } else if r.reverse < rel {
                EdgeTriplet { src: dst, dst: src, rel: r.reverse }
            } else {
                EdgeTriplet { src, dst, rel }
            };
            if !seen.insert(canonical) {
                duplicates += 1;
                continue;
            }
            edges.push(canonical);
            let reversed = EdgeTriplet {
                src: canonical.dst,
                dst: canonical.src,
                rel: relations[canonical.rel].reverse,
            };
            if reversed != canonical {
                edges.push(reversed);
            }
        }
        if duplicates > 0 {
            warn!("dropped {duplicates} duplicate edge(s)");
        }

        let mut in_edges = vec![Vec::new(); node_names.len()];
        for (i, e) in edges.iter().enumerate() {
            in_edges[e.dst].push(i);
        }

        Ok(HetGraph {
            node_types,
            relations,
            type_offsets,
            node_names,
            node_type,
            name_index,
            edges,
            in_edges,
            features,
            cold_start: cold,
            labels,
        })
    }
}

pub fn build_graph(spec: &GraphSpec, cold_start: ColdStart) -> Result<HetGraph, GraphError> {
    spec.build(cold_start)
}

fn type_features(
    type_name: &str,
    nodes: &[&NodeSpec],
    cold_start: ColdStart,
) -> Result<(Tensor, bool), GraphError> {
    let given = nodes.iter().filter(|n| n.features.is_some()).count();
    if given == 0 {
        let n = nodes.len();
        let t = match cold_start {
            ColdStart::Zeros => Tensor::zeros(n, 1),
            ColdStart::OneHot => Tensor::eye(n, n.max(1)),
        };
        return Ok((t, true));
    }
    let dim = nodes.iter().find_map(|n| n.features.as_ref()).map_or(0, Vec::len);
    let mut data = Vec::with_capacity(nodes.len() * dim);
    for n in nodes {
        let found = n.features.as_ref().map_or(0, Vec::len);
        if found != dim {
            return Err(GraphError::FeatureDimMismatch {
                node_type: type_name.to_string(),
                expected: dim,
                found,
            });
        }
        data.extend_from_slice(n.features.as_deref().unwrap_or_default());
    }
    Ok((Tensor::new(nodes.len(), dim, data).expect("feature shape"), false))
}

fn resolve_relations(
    specs: &[RelationSpec],
    lookup_type: &dyn Fn(&str) -> Result<usize, GraphError>,
) -> Result<Vec<RelationType>, GraphError> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, r) in specs.iter().enumerate() {
        if index.insert(r.name.as_str(), i).is_some() {
            return Err(GraphError::DuplicateRelation(r.name.clone()));
        }
    }
    let mut relations: Vec<RelationType> = Vec::with_capacity(specs.len() * 2);
    for (i, r) in specs.iter().enumerate() {
        relations.push(RelationType {
            id: i,
            name: r.name.clone(),
            src_type: lookup_type(&r.src_type)?,
            dst_type: lookup_type(&r.dst_type)?,
            reverse: usize::MAX,
            is_self_loop: false,
        });
    }
    for i in 0..specs.len() {
        let spec = &specs[i];
        if relations[i].reverse != usize::MAX {
            continue;
        }
        if spec.reverse == spec.name {
            if relations[i].src_type != relations[i].dst_type {
                return Err(GraphError::SelfReverseTypeMismatch(spec.name.clone()));
            }
            relations[i].reverse = i;
            continue;
        }
        match relations.iter().position(|r| r.name == spec.reverse) {
            Some(j) => {
                let (a, b) = (&relations[i], &relations[j]);
                // A synthesized reverse already belongs to another relation.
                if j >= specs.len()
                    || specs[j].reverse != spec.name
                    || a.src_type != b.dst_type
                    || a.dst_type != b.src_type
                {
                    return Err(GraphError::InconsistentReverse {
                        rel: spec.name.clone(),
                        reverse: spec.reverse.clone(),
                    });
                }
                relations[i].reverse = j;
                relations[j].reverse = i;
            }
            None => {
                let j = relations.len();
                let (src_type, dst_type) = (relations[i].dst_type, relations[i].src_type);
                relations.push(RelationType {
                    id: j,
                    name: spec.reverse.clone(),
                    src_type,
                    dst_type,
                    reverse: i,
                    is_self_loop: false,
                });
                relations[i].reverse = j;
            }
        }
    }
    Ok(relations)
}
