//! Type-aware attention layer (TAL).
//!
//! Every neighbor state is first projected into the target node's type
//! space by a per-type-pair transform, then scored with its relation's
//! attention vector, softmax-normalized over the target's in-edges, and
//! summed. Heads are concatenated; a residual connection is added where
//! the widths agree.
//!
//! States are stored row-wise, so a transform `W` of shape `out × in` acts
//! on a state matrix `H` as `H · Wᵀ`.

use std::collections::BTreeMap;
use std::ops::Range;

use rand::Rng;

use crate::autodiff::{self, AutodiffError, Axis, Tape, Tensor, Var};
use crate::config::ScoreMode;
use crate::hetgraph::HetGraph;
use crate::params::{BoundParams, ParamId, ParamStore};
use crate::trainer::glorot_uniform;

#[derive(Debug, thiserror::Error)]
pub enum TalError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("invalid layer configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

fn shape_err(op: &'static str, detail: String) -> TalError {
    TalError::Shape { op, detail }
}

/// `W · h`: projects a neighbor state into the target type's space.
pub fn transform(w: &Tensor, h: &[f64]) -> Result<Vec<f64>, TalError> {
    if w.cols() != h.len() {
        return Err(shape_err("transform", format!("{}x{} by {}", w.rows(), w.cols(), h.len())));
    }
    Ok((0..w.rows()).map(|r| w.row_slice(r).iter().zip(h).map(|(a, b)| a * b).sum()).collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `LeakyReLU([ĥ_j ‖ ĥ_i] · a_r)`.
pub fn attention_score_concat(h_dst: &[f64], h_src: &[f64], a: &[f64], slope: f64) -> Result<f64, TalError> {
    if a.len() != h_dst.len() + h_src.len() {
        return Err(shape_err(
            "attention_score_concat",
            format!("a has {} entries for states of {} and {}", a.len(), h_dst.len(), h_src.len()),
        ));
    }
    let (a_dst, a_src) = a.split_at(h_dst.len());
    Ok(autodiff::leaky_relu(dot(h_dst, a_dst) + dot(h_src, a_src), slope))
}

/// `LeakyReLU(ĥ_jᵀ (ĥ_i + sign · a_r))`; `sign` is `+1` for a relation's
/// canonical voice and `-1` for its reverse.
pub fn attention_score_voices(
    h_dst: &[f64],
    h_src: &[f64],
    a: &[f64],
    sign: f64,
    slope: f64,
) -> Result<f64, TalError> {
    if a.len() != h_dst.len() || h_src.len() != h_dst.len() {
        return Err(shape_err(
            "attention_score_voices",
            format!("lengths {}, {}, {}", h_dst.len(), h_src.len(), a.len()),
        ));
    }
    let raw: f64 = h_dst.iter().zip(h_src).zip(a).map(|((d, s), a)| d * (s + sign * a)).sum();
    Ok(autodiff::leaky_relu(raw, slope))
}

/// Softmax of edge scores within each destination's in-edge set.
pub fn normalize_attention(scores: &[f64], dst: &[usize], nodes: usize) -> Result<Vec<f64>, TalError> {
    Ok(autodiff::segment_softmax_values(scores, dst, nodes)?)
}

/// `ELU(Σ_e α_e ĥ_e)` for one destination node.
pub fn aggregate(alpha: &[f64], messages: &[Vec<f64>]) -> Result<Vec<f64>, TalError> {
    let Some(first) = messages.first() else {
        return Err(shape_err("aggregate", "no messages".into()));
    };
    if alpha.len() != messages.len() || messages.iter().any(|m| m.len() != first.len()) {
        return Err(shape_err("aggregate", format!("{} weights for {} messages", alpha.len(), messages.len())));
    }
    let mut out = vec![0.0; first.len()];
    for (a, m) in alpha.iter().zip(messages) {
        for (o, v) in out.iter_mut().zip(m) {
            *o += a * v;
        }
    }
    Ok(out.into_iter().map(autodiff::elu).collect())
}

/// Where a relation's attention vector comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttentionBinding {
    Own(ParamId),
    /// The negation of another relation's vector (the reverse voice).
    Negated(ParamId),
}

impl AttentionBinding {
    pub fn param(self) -> ParamId {
        match self {
            Self::Own(p) | Self::Negated(p) => p,
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Self::Own(_) => 1.0,
            Self::Negated(_) => -1.0,
        }
    }
}

/// Parameters of one attention head.
#[derive(Clone, Debug, PartialEq)]
pub struct TalHeadParams {
    /// `(target type, source type) → W`, shape `out_target × in_source`.
    pub transforms: BTreeMap<(usize, usize), ParamId>,
    /// Per type, the pseudo-inverse of the self-transform, shape
    /// `in × out`. Present only when the cycle loss is enabled.
    pub inverses: Vec<Option<ParamId>>,
    /// Per relation id.
    pub attention: Vec<AttentionBinding>,
}

impl TalHeadParams {
    pub fn transform(&self, dst: usize, src: usize) -> Option<ParamId> {
        self.transforms.get(&(dst, src)).copied()
    }

    /// Distinct attention parameters of this head.
    pub fn independent_attention(&self) -> Vec<ParamId> {
        let mut ids: Vec<ParamId> = self
            .attention
            .iter()
            .filter_map(|b| match b {
                AttentionBinding::Own(p) => Some(*p),
                AttentionBinding::Negated(_) => None,
            })
            .collect();
        ids.dedup();
        ids
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TalLayer {
    /// 0-based position in the stack.
    pub index: usize,
    /// Per type input width.
    pub in_dims: Vec<usize>,
    /// Per type output width of each head.
    pub head_dims: Vec<usize>,
    pub heads: Vec<TalHeadParams>,
    pub score_mode: ScoreMode,
    pub use_residual: bool,
    pub leaky_slope: f64,
    pub dropout: f64,
}

/// Construction options for one layer.
#[derive(Clone, Debug)]
pub struct TalLayerSpec {
    pub index: usize,
    pub in_dims: Vec<usize>,
    pub head_dims: Vec<usize>,
    pub heads: usize,
    pub score_mode: ScoreMode,
    pub use_residual: bool,
    pub with_inverses: bool,
    pub leaky_slope: f64,
    pub dropout: f64,
}

impl TalLayer {
    /// Registers the layer's parameters in `store`: Glorot-uniform
    /// transforms, zero attention vectors, rectangular-identity inverses.
    pub fn new<R: Rng + ?Sized>(
        g: &HetGraph,
        spec: &TalLayerSpec,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Result<Self, TalError> {
        let t = g.num_types();
        if spec.in_dims.len() != t || spec.head_dims.len() != t {
            return Err(TalError::Config(format!("dims given for {} types, graph has {t}", spec.in_dims.len())));
        }
        if spec.heads == 0 || spec.head_dims.contains(&0) {
            return Err(TalError::Config("heads and head widths must be positive".into()));
        }
        if spec.use_residual {
            if let Some(p) = (0..t).find(|&p| spec.in_dims[p] != spec.heads * spec.head_dims[p]) {
                return Err(TalError::Config(format!(
                    "residual needs input width {} of type `{}` to equal {} heads × {}",
                    spec.in_dims[p],
                    g.node_types()[p].name,
                    spec.heads,
                    spec.head_dims[p]
                )));
            }
        }
        if spec.score_mode == ScoreMode::Voices {
            if let Some(r) = g.relations().iter().find(|r| spec.head_dims[r.src_type] != spec.head_dims[r.dst_type]) {
                return Err(TalError::Config(format!(
                    "voices scoring needs equal head widths across relation `{}`",
                    r.name
                )));
            }
        }

        let type_name = |p: usize| g.node_types()[p].name.as_str();
        let l = spec.index + 1;
        let mut pairs: Vec<(usize, usize)> = g.relations().iter().map(|r| (r.dst_type, r.src_type)).collect();
        pairs.extend((0..t).map(|p| (p, p)));
        pairs.sort_unstable();
        pairs.dedup();

        let mut heads = Vec::with_capacity(spec.heads);
        for m in 0..spec.heads {
            let mut transforms = BTreeMap::new();
            for &(q, p) in &pairs {
                let w = glorot_uniform(spec.head_dims[q], spec.in_dims[p], rng);
                let id = store.add(format!("l{l}.h{m}.W.{}<-{}", type_name(q), type_name(p)), w, true);
                transforms.insert((q, p), id);
            }
            let inverses = (0..t)
                .map(|p| {
                    spec.with_inverses.then(|| {
                        let w = Tensor::eye(spec.in_dims[p], spec.head_dims[p]);
                        store.add(format!("l{l}.h{m}.Winv.{}", type_name(p)), w, false)
                    })
                })
                .collect();
            let mut attention: Vec<Option<AttentionBinding>> = vec![None; g.relations().len()];
            for r in g.relations() {
                if attention[r.id].is_some() {
                    continue;
                }
                let n = spec.head_dims[r.dst_type];
                let rows = match spec.score_mode {
                    ScoreMode::Concat => 2 * n,
                    ScoreMode::Voices => n,
                };
                let id = store.add(format!("l{l}.h{m}.a.{}", r.name), Tensor::zeros(rows, 1), true);
                attention[r.id] = Some(AttentionBinding::Own(id));
                if spec.score_mode == ScoreMode::Voices && !r.is_self_reverse() {
                    attention[r.reverse] = Some(AttentionBinding::Negated(id));
                }
            }
            heads.push(TalHeadParams {
                transforms,
                inverses,
                attention: attention.into_iter().map(|a| a.expect("every relation bound")).collect(),
            });
        }
        Ok(Self {
            index: spec.index,
            in_dims: spec.in_dims.clone(),
            head_dims: spec.head_dims.clone(),
            heads,
            score_mode: spec.score_mode,
            use_residual: spec.use_residual,
            leaky_slope: spec.leaky_slope,
            dropout: spec.dropout,
        })
    }

    /// Per type output width, heads concatenated.
    pub fn out_dims(&self) -> Vec<usize> {
        self.head_dims.iter().map(|d| d * self.heads.len()).collect()
    }
}

/// Edges of one relation, all sharing a source and a destination type.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeBlock {
    pub rel: usize,
    pub src_type: usize,
    pub dst_type: usize,
    pub edge_ids: Vec<usize>,
    pub src_local: Vec<usize>,
    pub dst_local: Vec<usize>,
}

/// The graph's edges grouped by `(destination type, relation)`. Scores and
/// attention coefficients are laid out in this order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeBlocks {
    pub blocks: Vec<EdgeBlock>,
    /// Edge id at each position of the score layout.
    pub edge_order: Vec<usize>,
    /// Global destination node at each position.
    pub dst_global: Vec<usize>,
    /// Per destination type, its block indices and its span of positions.
    pub by_dst: Vec<(Vec<usize>, Range<usize>)>,
    pub num_nodes: usize,
}

impl EdgeBlocks {
    pub fn new(g: &HetGraph) -> Self {
        let mut map: BTreeMap<(usize, usize), EdgeBlock> = BTreeMap::new();
        for (id, e) in g.edges().iter().enumerate() {
            let r = g.relation(e.rel);
            let b = map.entry((r.dst_type, e.rel)).or_insert_with(|| EdgeBlock {
                rel: e.rel,
                src_type: r.src_type,
                dst_type: r.dst_type,
                edge_ids: Vec::new(),
                src_local: Vec::new(),
                dst_local: Vec::new(),
            });
            b.edge_ids.push(id);
            b.src_local.push(g.local_index(e.src));
            b.dst_local.push(g.local_index(e.dst));
        }
        let blocks: Vec<EdgeBlock> = map.into_values().collect();
        let mut edge_order = Vec::with_capacity(g.num_edges());
        let mut by_dst: Vec<(Vec<usize>, Range<usize>)> = vec![(Vec::new(), 0..0); g.num_types()];
        for (bi, b) in blocks.iter().enumerate() {
            let entry = &mut by_dst[b.dst_type];
            if entry.0.is_empty() {
                entry.1 = edge_order.len()..edge_order.len();
            }
            entry.0.push(bi);
            edge_order.extend_from_slice(&b.edge_ids);
            entry.1.end = edge_order.len();
        }
        let dst_global = edge_order.iter().map(|&e| g.edges()[e].dst).collect();
        Self { blocks, edge_order, dst_global, by_dst, num_nodes: g.num_nodes() }
    }
}

/// Result of one layer on the tape.
#[derive(Clone, Debug)]
pub struct TalOutput {
    /// Per type, `count × (heads · head_dim)`.
    pub states: Vec<Var>,
    /// Per type, the layer input after dropout.
    pub inputs: Vec<Var>,
    /// Per head, attention coefficients laid out as
    /// [`EdgeBlocks::edge_order`]; `None` when the graph has no edges.
    pub attention: Vec<Option<Var>>,
}

/// One TAL applied to per-type input states.
#[allow(clippy::too_many_arguments)]
pub fn tal_forward<R: Rng + ?Sized>(
    tape: &mut Tape,
    g: &HetGraph,
    blocks: &EdgeBlocks,
    layer: &TalLayer,
    params: &BoundParams,
    inputs: &[Var],
    rng: &mut R,
    training: bool,
) -> Result<TalOutput, TalError> {
    let t = g.num_types();
    if inputs.len() != t {
        return Err(shape_err("tal_forward", format!("{} input matrices for {t} types", inputs.len())));
    }
    for p in 0..t {
        let v = tape.value(inputs[p]);
        if v.rows() != g.count(p) || v.cols() != layer.in_dims[p] {
            return Err(shape_err(
                "tal_forward",
                format!(
                    "type `{}` input is {}x{}, expected {}x{}",
                    g.node_types()[p].name,
                    v.rows(),
                    v.cols(),
                    g.count(p),
                    layer.in_dims[p]
                ),
            ));
        }
    }
    let x: Vec<Var> = inputs.iter().map(|&h| tape.dropout(h, layer.dropout, rng, training)).collect();

    let mut head_states: Vec<Vec<Var>> = vec![Vec::with_capacity(layer.heads.len()); t];
    let mut attention = Vec::with_capacity(layer.heads.len());
    for head in &layer.heads {
        let mut proj: BTreeMap<(usize, usize), Var> = BTreeMap::new();
        let mut project = |tape: &mut Tape, q: usize, p: usize| -> Result<Var, TalError> {
            if let Some(&v) = proj.get(&(q, p)) {
                return Ok(v);
            }
            let w = head.transform(q, p).ok_or_else(|| {
                TalError::Config(format!("no transform for type pair ({q}, {p})"))
            })?;
            let wt = tape.transpose(params.var(w));
            let v = tape.matmul(x[p], wt)?;
            proj.insert((q, p), v);
            Ok(v)
        };
        let mut signed: BTreeMap<ParamId, Var> = BTreeMap::new();

        let mut scores = Vec::with_capacity(blocks.blocks.len());
        let mut messages = Vec::with_capacity(blocks.blocks.len());
        for b in &blocks.blocks {
            let h_self = project(tape, b.dst_type, b.dst_type)?;
            let h_src = project(tape, b.dst_type, b.src_type)?;
            let hj = tape.gather_rows(h_self, &b.dst_local)?;
            let hi = tape.gather_rows(h_src, &b.src_local)?;
            let binding = head.attention[b.rel];
            let a = params.var(binding.param());
            let s = match layer.score_mode {
                ScoreMode::Concat => {
                    let n = layer.head_dims[b.dst_type];
                    let a_dst = tape.slice(a, 0, n, Axis::Rows)?;
                    let a_src = tape.slice(a, n, 2 * n, Axis::Rows)?;
                    let s_dst = tape.matmul(hj, a_dst)?;
                    let s_src = tape.matmul(hi, a_src)?;
                    tape.add(s_dst, s_src)?
                }
                ScoreMode::Voices => {
                    let a = match binding {
                        AttentionBinding::Own(_) => a,
                        AttentionBinding::Negated(id) => *signed.entry(id).or_insert_with(|| tape.neg(a)),
                    };
                    let inner = tape.row_dot(hj, hi)?;
                    let shift = tape.matmul(hj, a)?;
                    tape.add(inner, shift)?
                }
            };
            scores.push(s);
            messages.push(hi);
        }

        if scores.is_empty() {
            for p in 0..t {
                let z = tape.constant(Tensor::zeros(g.count(p), layer.head_dims[p]));
                head_states[p].push(z);
            }
            attention.push(None);
            continue;
        }
        let raw = tape.concat(&scores, Axis::Rows)?;
        let o = tape.leaky_relu(raw, layer.leaky_slope);
        let alpha = tape.segment_softmax(o, &blocks.dst_global, blocks.num_nodes)?;
        for (q, (block_ids, span)) in blocks.by_dst.iter().enumerate() {
            if block_ids.is_empty() {
                let z = tape.constant(Tensor::zeros(g.count(q), layer.head_dims[q]));
                head_states[q].push(z);
                continue;
            }
            let parts: Vec<Var> = block_ids.iter().map(|&bi| messages[bi]).collect();
            let msgs = tape.concat(&parts, Axis::Rows)?;
            let a_q = tape.slice(alpha, span.start, span.end, Axis::Rows)?;
            let weighted = tape.scale_rows(msgs, a_q)?;
            let dst_local: Vec<usize> =
                block_ids.iter().flat_map(|&bi| blocks.blocks[bi].dst_local.iter().copied()).collect();
            let summed = tape.segment_sum(weighted, &dst_local, g.count(q))?;
            head_states[q].push(tape.elu(summed));
        }
        attention.push(Some(alpha));
    }

    let mut states = Vec::with_capacity(t);
    for (p, heads) in head_states.into_iter().enumerate() {
        let mut h = if heads.len() == 1 { heads[0] } else { tape.concat(&heads, Axis::Cols)? };
        if layer.use_residual {
            h = tape.add(h, x[p])?;
        }
        states.push(h);
    }
    Ok(TalOutput { states, inputs: x, attention })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hetgraph::{ColdStart, EdgeSpec, GraphSpec, NodeSpec, RelationSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn transform_examples() {
        let h = [1.0, 2.0, 3.0];
        assert_eq!(transform(&Tensor::eye(3, 3), &h).unwrap(), h.to_vec());
        assert_eq!(transform(&Tensor::zeros(2, 3), &h).unwrap(), vec![0.0, 0.0]);
        let w = Tensor::from_rows(&[vec![1.0, 0.0, 2.0], vec![0.0, 1.0, -1.0]]).unwrap();
        assert_eq!(transform(&w, &h).unwrap(), vec![7.0, -1.0]);
        assert!(transform(&w, &[1.0]).is_err());
    }

    #[test]
    fn concat_score_examples() {
        assert_eq!(attention_score_concat(&[1.0, 2.0], &[3.0, 4.0], &[0.0; 4], 0.2).unwrap(), 0.0);
        let s = attention_score_concat(&[1.0, 0.0], &[0.0, 1.0], &[1.0, 2.0, 3.0, 4.0], 0.2).unwrap();
        assert_eq!(s, 5.0);
        let s = attention_score_concat(&[1.0], &[0.0], &[-5.0, 0.0], 0.2).unwrap();
        assert_eq!(s, -1.0);
        assert!(attention_score_concat(&[1.0], &[1.0], &[1.0], 0.2).is_err());
    }

    #[test]
    fn voices_score_examples() {
        assert_eq!(attention_score_voices(&[0.0, 0.0], &[3.0, 1.0], &[5.0, -2.0], 1.0, 0.2).unwrap(), 0.0);
        let plain = attention_score_voices(&[1.0, -2.0], &[3.0, 1.0], &[0.0, 0.0], 1.0, 0.2).unwrap();
        assert_eq!(plain, 1.0);
        let (hj, hi, a) = ([1.0, 1.0], [2.0, 0.0], [0.0, 1.0]);
        assert_eq!(attention_score_voices(&hj, &hi, &a, 1.0, 0.2).unwrap(), 3.0);
        assert_eq!(attention_score_voices(&hj, &hi, &a, -1.0, 0.2).unwrap(), 1.0);
    }

    #[test]
    fn normalize_and_aggregate_examples() {
        assert_eq!(normalize_attention(&[3.7], &[0], 1).unwrap(), vec![1.0]);
        assert_eq!(normalize_attention(&[0.4, 0.4], &[0, 0], 1).unwrap(), vec![0.5, 0.5]);
        assert_eq!(aggregate(&[1.0], &[vec![1.0, 0.0]]).unwrap(), vec![1.0, 0.0]);
        let out = aggregate(&[0.5, 0.5], &[vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
        assert_eq!(out, vec![1.0, 1.0]);
    }

    fn one_node_graph() -> HetGraph {
        let spec = GraphSpec {
            node_types: vec!["a".into()],
            nodes: vec![NodeSpec { name: "x".into(), node_type: "a".into(), label: None, features: Some(vec![0.5, -1.0]) }],
            ..Default::default()
        };
        spec.build(ColdStart::OneHot).unwrap().add_self_loops().unwrap()
    }

    fn spec_for(g: &HetGraph, heads: usize, head_dim: usize, residual: bool, mode: ScoreMode) -> TalLayerSpec {
        TalLayerSpec {
            index: 0,
            in_dims: g.node_types().iter().map(|t| t.feature_dim).collect(),
            head_dims: vec![head_dim; g.num_types()],
            heads,
            score_mode: mode,
            use_residual: residual,
            with_inverses: false,
            leaky_slope: 0.2,
            dropout: 0.0,
        }
    }

    #[test]
    fn single_node_identity_with_residual() {
        let g = one_node_graph();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = TalLayer::new(&g, &spec_for(&g, 1, 2, true, ScoreMode::Concat), &mut store, &mut rng).unwrap();
        *store.get_mut(layer.heads[0].transform(0, 0).unwrap()) = Tensor::eye(2, 2);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let h = tape.constant(g.features(0).clone());
        let blocks = EdgeBlocks::new(&g);
        let out = tal_forward(&mut tape, &g, &blocks, &layer, &bound, &[h], &mut rng, false).unwrap();
        let got = tape.value(out.states[0]).data().to_vec();
        let want: Vec<f64> = [0.5, -1.0].iter().map(|&v| v + autodiff::elu(v)).collect();
        assert_eq!(got, want);
        assert_eq!(tape.value(out.attention[0].unwrap()).data(), &[1.0]);
    }

    #[test]
    fn residual_width_mismatch_is_a_config_error() {
        let g = one_node_graph();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = TalLayer::new(&g, &spec_for(&g, 2, 2, true, ScoreMode::Concat), &mut store, &mut rng);
        assert!(matches!(err, Err(TalError::Config(_))));
    }

    fn paired_graph() -> HetGraph {
        let node = |n: &str, t: &str, f: Vec<f64>| NodeSpec { name: n.into(), node_type: t.into(), label: None, features: Some(f) };
        let spec = GraphSpec {
            node_types: vec!["a".into(), "b".into()],
            nodes: vec![
                node("a0", "a", vec![1.0, 0.0]),
                node("a1", "a", vec![0.0, 1.0]),
                node("b0", "b", vec![1.0, 1.0, 0.0]),
            ],
            relations: vec![
                RelationSpec { name: "writes".into(), src_type: "a".into(), dst_type: "b".into(), reverse: "written".into() },
                RelationSpec { name: "co".into(), src_type: "a".into(), dst_type: "a".into(), reverse: "co".into() },
            ],
            edges: vec![
                EdgeSpec { src: "a0".into(), dst: "b0".into(), relation: "writes".into() },
                EdgeSpec { src: "a0".into(), dst: "a1".into(), relation: "co".into() },
            ],
        };
        spec.build(ColdStart::OneHot).unwrap().add_self_loops().unwrap()
    }

    #[test]
    fn voices_bindings_alias_reverse_relations() {
        let g = paired_graph();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer = TalLayer::new(&g, &spec_for(&g, 2, 4, false, ScoreMode::Voices), &mut store, &mut rng).unwrap();
        for head in &layer.heads {
            for r in g.relations() {
                let (b, rb) = (head.attention[r.id], head.attention[r.reverse]);
                assert_eq!(b.param(), rb.param());
                if r.is_self_reverse() {
                    assert!(matches!(b, AttentionBinding::Own(_)));
                } else {
                    assert_eq!(b.sign(), -rb.sign());
                }
            }
            // writes/written share one; co and two self-loops own theirs.
            assert_eq!(head.independent_attention().len(), 4);
        }
    }

    #[test]
    fn edge_blocks_cover_every_edge_once() {
        let g = paired_graph();
        let blocks = EdgeBlocks::new(&g);
        let mut seen = blocks.edge_order.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..g.num_edges()).collect::<Vec<_>>());
        for (q, (ids, span)) in blocks.by_dst.iter().enumerate() {
            for &e in &blocks.edge_order[span.clone()] {
                assert_eq!(g.type_of(g.edges()[e].dst), q);
            }
            assert!(!ids.is_empty());
        }
    }
}
