//! Verification tooling: gradient checks of the full training objective
//! against central finite differences, random graph fixtures, and a naive
//! per-node, per-edge reimplementation of the layer stack.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{finite_diff_grad, max_relative_error, Tape, Tensor};
use crate::config::{ModelConfig, ScoreMode, Variant};
use crate::hetgraph::{ColdStart, EdgeSpec, GraphSpec, HetGraph, NodeSpec, RelationSpec};
use crate::model::{total_loss, HetSannModel, ModelError, TaskMask};
use crate::tal::AttentionBinding;
use crate::trainer::{init_model, stream_rng, RngStream};

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
pub const GRADCHECK_EPS: f64 = 1e-5;

/// Twelve nodes of two labeled types joined by `writes`/`written` and a
/// symmetric `coauthor` relation, with self-loops.
pub fn gradcheck_fixture(seed: u64) -> HetGraph {
    let mut rng = stream_rng(seed, RngStream::Init);
    let mut nodes = Vec::new();
    for (ty, n, dim) in [("author", 5, 3), ("paper", 7, 4)] {
        for i in 0..n {
            let features = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            nodes.push(NodeSpec { name: format!("{ty}{i}"), node_type: ty.into(), label: Some(i % 2), features: Some(features) });
        }
    }
    let edge = |s: String, d: String, r: &str| EdgeSpec { src: s, dst: d, relation: r.into() };
    let mut edges = Vec::new();
    for p in 0..7 {
        edges.push(edge(format!("author{}", p % 5), format!("paper{p}"), "writes"));
        if p % 2 == 0 {
            edges.push(edge(format!("author{}", (p + 2) % 5), format!("paper{p}"), "writes"));
        }
    }
    for (a, b) in [(0, 1), (1, 2), (3, 4), (0, 4)] {
        edges.push(edge(format!("author{a}"), format!("author{b}"), "coauthor"));
    }
    let spec = GraphSpec {
        node_types: vec!["author".into(), "paper".into()],
        nodes,
        relations: vec![
            RelationSpec { name: "writes".into(), src_type: "author".into(), dst_type: "paper".into(), reverse: "written".into() },
            RelationSpec { name: "coauthor".into(), src_type: "author".into(), dst_type: "author".into(), reverse: "coauthor".into() },
        ],
        edges,
    };
    spec.build(ColdStart::OneHot).expect("fixture is valid").add_self_loops().expect("no self-loops yet")
}

/// A small configuration for `variant`: two layers, two heads of width 3,
/// no dropout.
pub fn gradcheck_config(variant: Variant) -> ModelConfig {
    ModelConfig { layers: 2, heads: 2, head_dim: 3, dropout: 0.0, ..Default::default() }.with_variant(variant)
}

/// Builds the model and moves every parameter off its structured
/// initialization, so no attention score sits at the LeakyReLU kink and
/// the pseudo-inverses differ from the identity.
pub fn gradcheck_model(g: &HetGraph, config: &ModelConfig, seed: u64) -> Result<HetSannModel, ModelError> {
    let mut model = init_model(g, config, seed)?;
    perturb_params(&mut model, seed);
    Ok(model)
}

/// Adds `U(-0.5, 0.5)` noise to every parameter entry.
pub fn perturb_params(model: &mut HetSannModel, seed: u64) {
    let mut rng = stream_rng(seed, RngStream::Split);
    let ids: Vec<_> = model.params.ids().collect();
    for id in ids {
        for v in model.params.get_mut(id).data_mut() {
            *v += rng.random_range(-0.5..0.5);
        }
    }
}

/// Every labeled node of every task.
pub fn all_labeled_masks(g: &HetGraph, model: &HetSannModel) -> Vec<TaskMask> {
    model
        .tasks
        .iter()
        .map(|t| {
            let (rows, targets) = g.labels(t.node_type).expect("labeled task").labeled().unzip();
            TaskMask { rows, targets }
        })
        .collect()
}

/// Inference-mode objective value for the model's current parameters.
pub fn objective(g: &HetGraph, model: &HetSannModel, masks: &[TaskMask], reg_weight: f64) -> Result<f64, ModelError> {
    let mut tape = Tape::new();
    let bound = model.params.bind(&mut tape);
    let mut rng = stream_rng(0, RngStream::Dropout);
    let pass = model.forward(&mut tape, &bound, g, &mut rng, false)?;
    let loss = total_loss(&mut tape, model, &bound, &pass, masks, reg_weight)?;
    Ok(tape.value(loss.total).item())
}

/// Analytic gradients of the objective, aligned with the parameter store.
pub fn analytic_gradients(
    g: &HetGraph,
    model: &HetSannModel,
    masks: &[TaskMask],
    reg_weight: f64,
) -> Result<Vec<Tensor>, ModelError> {
    let mut tape = Tape::new();
    let bound = model.params.bind(&mut tape);
    let mut rng = stream_rng(0, RngStream::Dropout);
    let pass = model.forward(&mut tape, &bound, g, &mut rng, false)?;
    let loss = total_loss(&mut tape, model, &bound, &pass, masks, reg_weight)?;
    let mut grads = tape.backward(loss.total)?;
    Ok(model.params.collect_grads(&bound, &mut grads))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    /// `(parameter name, max relative error)`, in store order.
    pub per_param: Vec<(String, f64)>,
    pub max_relative_error: f64,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error < self.tolerance
    }

    pub fn worst(&self) -> Option<&(String, f64)> {
        self.per_param.iter().max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Compares analytic and finite-difference gradients of every parameter.
/// `corrupt` perturbs one analytic entry, as a negative control.
pub fn gradcheck(
    g: &HetGraph,
    model: &HetSannModel,
    reg_weight: f64,
    corrupt: bool,
) -> Result<GradcheckReport, ModelError> {
    let masks = all_labeled_masks(g, model);
    let mut analytic = analytic_gradients(g, model, &masks, reg_weight)?;
    if corrupt {
        if let Some(t) = analytic.iter_mut().find(|t| !t.is_empty()) {
            t.data_mut()[0] += 0.1;
        }
    }
    let mut probe = model.clone();
    let mut per_param = Vec::with_capacity(analytic.len());
    let ids: Vec<_> = model.params.ids().collect();
    for (id, a) in ids.into_iter().zip(&analytic) {
        let base = model.params.get(id).clone();
        let mut failure = None;
        let numeric = finite_diff_grad(
            |x| {
                *probe.params.get_mut(id) = x.clone();
                objective(g, &probe, &masks, reg_weight).unwrap_or_else(|e| {
                    failure.get_or_insert(e);
                    f64::NAN
                })
            },
            &base,
            GRADCHECK_EPS,
        );
        *probe.params.get_mut(id) = base;
        if let Some(e) = failure {
            return Err(e);
        }
        per_param.push((model.params.param(id).name.clone(), max_relative_error(a, &numeric)));
    }
    let max = per_param.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(GradcheckReport { per_param, max_relative_error: max, tolerance: GRADCHECK_TOLERANCE })
}

/// A random labeled graph with 2 or 3 types, paired, symmetric and
/// same-type relations, a second relation between the first two types (so
/// node pairs can be joined twice), and self-loops.
pub fn random_fixture(seed: u64) -> HetGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let types = rng.random_range(2..=3);
    let names: Vec<String> = (0..types).map(|t| format!("t{t}")).collect();
    let mut nodes = Vec::new();
    let mut by_type = Vec::new();
    for name in &names {
        let n = rng.random_range(2..=6);
        let dim = rng.random_range(1..=4);
        let mut ids = Vec::new();
        for i in 0..n {
            let features = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let node = format!("{name}_{i}");
            ids.push(node.clone());
            nodes.push(NodeSpec { name: node, node_type: name.clone(), label: Some(i % 2), features: Some(features) });
        }
        by_type.push(ids);
    }
    let mut relations = Vec::new();
    for a in 0..types {
        for b in 0..types {
            if a < b || (a == b && rng.random_bool(0.5)) {
                let sym = a == b && rng.random_bool(0.5);
                let name = format!("r{a}{b}");
                let reverse = if sym { name.clone() } else { format!("{name}_rev") };
                relations.push(RelationSpec { name, src_type: names[a].clone(), dst_type: names[b].clone(), reverse });
            }
        }
    }
    relations.push(RelationSpec {
        name: "par".into(),
        src_type: names[0].clone(),
        dst_type: names[1].clone(),
        reverse: "par_rev".into(),
    });
    let mut edges = Vec::new();
    for r in &relations {
        let src = &by_type[names.iter().position(|n| *n == r.src_type).expect("declared type")];
        let dst = &by_type[names.iter().position(|n| *n == r.dst_type).expect("declared type")];
        for s in src {
            for d in dst {
                if s != d && rng.random_bool(0.35) {
                    edges.push(EdgeSpec { src: s.clone(), dst: d.clone(), relation: r.name.clone() });
                }
            }
        }
    }
    GraphSpec { node_types: names, nodes, relations, edges }
        .build(ColdStart::OneHot)
        .expect("fixture is valid")
        .add_self_loops()
        .expect("no self-loops yet")
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

/// `W h` for a row-major `W`.
fn apply(w: &Tensor, h: &[f64]) -> Vec<f64> {
    (0..w.rows()).map(|r| (0..w.cols()).map(|c| w.get(r, c) * h[c]).sum()).collect()
}

/// Inference-mode states after every layer, indexed `[layer][type][node]`,
/// computed one node and one in-edge at a time without the tape.
pub fn naive_forward(g: &HetGraph, model: &HetSannModel) -> Vec<Vec<Vec<Vec<f64>>>> {
    let mut h: Vec<Vec<Vec<f64>>> = (0..g.num_types())
        .map(|p| (0..g.count(p)).map(|i| g.features(p).row_slice(i).to_vec()).collect())
        .collect();
    let mut all = Vec::new();
    for layer in &model.layers {
        let mut next: Vec<Vec<Vec<f64>>> = (0..g.num_types()).map(|p| vec![Vec::new(); g.count(p)]).collect();
        for j in 0..g.num_nodes() {
            let q = g.type_of(j);
            let hj = &h[q][g.local_index(j)];
            for head in &layer.heads {
                let w_self = model.params.get(head.transform(q, q).expect("self transform"));
                let hat_j = apply(w_self, hj);
                let mut scores = Vec::new();
                let mut msgs = Vec::new();
                for e in g.in_edges(j).expect("node exists") {
                    let p = g.type_of(e.src);
                    let w = model.params.get(head.transform(q, p).expect("realized type pair"));
                    let hat_i = apply(w, &h[p][g.local_index(e.src)]);
                    let binding = head.attention[e.rel];
                    let a = model.params.get(binding.param()).data();
                    let raw: f64 = match layer.score_mode {
                        ScoreMode::Concat => {
                            let n = hat_j.len();
                            (0..n).map(|k| hat_j[k] * a[k] + hat_i[k] * a[n + k]).sum()
                        }
                        ScoreMode::Voices => {
                            let sign = match binding {
                                AttentionBinding::Own(_) => 1.0,
                                AttentionBinding::Negated(_) => -1.0,
                            };
                            (0..hat_j.len()).map(|k| hat_j[k] * (hat_i[k] + sign * a[k])).sum()
                        }
                    };
                    scores.push(leaky(raw, layer.leaky_slope));
                    msgs.push(hat_i);
                }
                let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                let z: f64 = exps.iter().sum();
                let mut out = vec![0.0; hat_j.len()];
                for (ex, m) in exps.iter().zip(&msgs) {
                    for (o, v) in out.iter_mut().zip(m) {
                        *o += ex / z * v;
                    }
                }
                next[q][g.local_index(j)].extend(out.into_iter().map(elu));
            }
            if layer.use_residual {
                let row = &mut next[q][g.local_index(j)];
                for (o, v) in row.iter_mut().zip(hj) {
                    *o += v;
                }
            }
        }
        all.push(next.clone());
        h = next;
    }
    all
}

/// Three layers of two width-2 heads on `random_fixture(seed)` with
/// perturbed parameters: the largest absolute difference between the tape
/// forward pass and `naive_forward`, over every layer, node and unit.
pub fn oracle_max_diff(seed: u64, mode: ScoreMode, residual: bool) -> Result<f64, ModelError> {
    let g = random_fixture(seed);
    let config = ModelConfig { layers: 3, heads: 2, head_dim: 2, residual, dropout: 0.0, score_mode: mode, ..Default::default() };
    let mut model = init_model(&g, &config, seed)?;
    perturb_params(&mut model, seed);
    let naive = naive_forward(&g, &model);

    let mut tape = Tape::new();
    let bound = model.params.bind(&mut tape);
    let pass = model.forward(&mut tape, &bound, &g, &mut stream_rng(seed, RngStream::Dropout), false)?;
    let mut worst: f64 = 0.0;
    for (l, out) in pass.layers.iter().enumerate() {
        for p in 0..g.num_types() {
            let got = tape.value(out.states[p]);
            for (i, want) in naive[l][p].iter().enumerate() {
                if got.row_slice(i).len() != want.len() {
                    return Ok(f64::INFINITY);
                }
                for (a, b) in got.row_slice(i).iter().zip(want) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
    }
    Ok(worst)
}

/// Two layers of three heads on `random_fixture(seed)`, concat scoring for
/// even seeds and voices for odd: the largest `|Σ α − 1|` over every node,
/// head and layer.
pub fn attention_sum_max_error(seed: u64) -> Result<f64, ModelError> {
    let g = random_fixture(seed);
    let mode = if seed % 2 == 0 { ScoreMode::Concat } else { ScoreMode::Voices };
    let config = ModelConfig { layers: 2, heads: 3, head_dim: 2, dropout: 0.0, score_mode: mode, ..Default::default() };
    let mut model = init_model(&g, &config, seed)?;
    perturb_params(&mut model, seed);
    let mut tape = Tape::new();
    let bound = model.params.bind(&mut tape);
    let pass = model.forward(&mut tape, &bound, &g, &mut stream_rng(seed, RngStream::Dropout), false)?;
    let mut worst: f64 = 0.0;
    for out in &pass.layers {
        for alpha in out.attention.iter().flatten() {
            let alpha = tape.value(*alpha);
            let mut sums = vec![0.0; g.num_nodes()];
            for (pos, &j) in model.blocks().dst_global.iter().enumerate() {
                sums[j] += alpha.data()[pos];
            }
            worst = sums.iter().fold(worst, |w, s| w.max((s - 1.0).abs()));
        }
    }
    Ok(worst)
}
