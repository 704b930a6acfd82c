use super::*;
use crate::autodiff::Tape;
use crate::config::Variant;
use crate::hetgraph::{ColdStart, EdgeSpec, GraphSpec, NodeSpec, RelationSpec};
use crate::trainer::{init_model, masks, split_dataset};
use crate::eval::SplitKind;

fn small_graph(labels_b: bool) -> HetGraph {
    let node = |n: &str, t: &str, label: Option<usize>, f: Vec<f64>| NodeSpec {
        name: n.into(),
        node_type: t.into(),
        label,
        features: Some(f),
    };
    let lb = |c| if labels_b { Some(c) } else { None };
    let spec = GraphSpec {
        node_types: vec!["a".into(), "b".into()],
        nodes: vec![
            node("a0", "a", Some(0), vec![1.0, 0.2]),
            node("a1", "a", Some(1), vec![-0.3, 0.8]),
            node("a2", "a", Some(0), vec![0.5, -0.5]),
            node("b0", "b", lb(1), vec![0.1, 0.0, 1.0]),
            node("b1", "b", lb(0), vec![0.7, -0.2, 0.3]),
        ],
        relations: vec![
            RelationSpec { name: "writes".into(), src_type: "a".into(), dst_type: "b".into(), reverse: "written".into() },
            RelationSpec { name: "co".into(), src_type: "a".into(), dst_type: "a".into(), reverse: "co".into() },
        ],
        edges: vec![
            EdgeSpec { src: "a0".into(), dst: "b0".into(), relation: "writes".into() },
            EdgeSpec { src: "a1".into(), dst: "b0".into(), relation: "writes".into() },
            EdgeSpec { src: "a2".into(), dst: "b1".into(), relation: "writes".into() },
            EdgeSpec { src: "a0".into(), dst: "a1".into(), relation: "co".into() },
        ],
    };
    spec.build(ColdStart::OneHot).unwrap().add_self_loops().unwrap()
}

fn cfg(variant: Variant) -> ModelConfig {
    ModelConfig { layers: 2, heads: 2, head_dim: 3, dropout: 0.0, ..Default::default() }.with_variant(variant)
}

fn all_rows_masks(g: &HetGraph, m: &HetSannModel) -> Vec<TaskMask> {
    m.tasks
        .iter()
        .map(|t| {
            let l = g.labels(t.node_type).unwrap();
            let (rows, targets) = l.labeled().unzip();
            TaskMask { rows, targets }
        })
        .collect()
}

fn loss_of(g: &HetGraph, m: &HetSannModel) -> LossBreakdown {
    let mut tape = Tape::new();
    let bound = m.params.bind(&mut tape);
    let mut rng = crate::trainer::stream_rng(0, crate::trainer::RngStream::Dropout);
    let pass = m.forward(&mut tape, &bound, g, &mut rng, false).unwrap();
    total_loss(&mut tape, m, &bound, &pass, &all_rows_masks(g, m), 5e-4).unwrap().values(&tape)
}

#[test]
fn requires_self_loops() {
    let g = small_graph(true);
    let spec_graph = {
        // Rebuild without self-loops by reloading the same spec.
        let mut m = ModelConfig::default();
        m.layers = 1;
        let bare = GraphSpec { node_types: vec!["a".into()], ..Default::default() }.build(ColdStart::OneHot).unwrap();
        HetSannModel::new(&bare, &m, &mut crate::trainer::stream_rng(0, crate::trainer::RngStream::Init))
    };
    assert!(matches!(spec_graph, Err(ModelError::MissingSelfLoops)));
    assert!(init_model(&g, &cfg(Variant::BASE), 0).is_ok());
}

#[test]
fn logits_shape_and_inference_determinism() {
    let g = small_graph(true);
    let m = init_model(&g, &cfg(Variant::MRV), 1).unwrap();
    assert_eq!(m.tasks.len(), 2);
    let a = m.predict_logits(&g).unwrap();
    let b = m.predict_logits(&g).unwrap();
    assert_eq!(a, b);
    assert_eq!(a[0].shape(), [3, 2]);
    assert_eq!(a[1].shape(), [2, 2]);
}

#[test]
fn residual_only_where_widths_agree() {
    let g = small_graph(true);
    let m = init_model(&g, &ModelConfig { layers: 3, heads: 2, head_dim: 3, ..Default::default() }, 0).unwrap();
    let flags: Vec<bool> = m.layers.iter().map(|l| l.use_residual).collect();
    assert_eq!(flags, vec![false, true, true]);
}

#[test]
fn uniform_logits_give_ln_classes() {
    let mut tape = Tape::new();
    let z = tape.leaf(Tensor::zeros(3, 4));
    let l = classification_loss(&mut tape, z, &TaskMask { rows: vec![0, 2], targets: vec![1, 3] }).unwrap();
    assert!((tape.value(l).item() - 4f64.ln()).abs() < 1e-15);

    let mut tape = Tape::new();
    let z = tape.leaf(Tensor::from_rows(&[vec![30.0, -30.0]]).unwrap());
    let l = classification_loss(&mut tape, z, &TaskMask { rows: vec![0], targets: vec![0] }).unwrap();
    assert!(tape.value(l).item() < 1e-9);
}

#[test]
fn multi_task_sum() {
    let mut tape = Tape::new();
    let a = tape.leaf(Tensor::scalar(0.5));
    let b = tape.leaf(Tensor::scalar(0.3));
    let one = multi_task_loss(&mut tape, &[a]).unwrap();
    assert_eq!(one, a);
    let s = multi_task_loss(&mut tape, &[a, b]).unwrap();
    assert!((tape.value(s).item() - 0.8).abs() < 1e-15);
}

#[test]
fn l2_examples() {
    let mut store = ParamStore::new();
    store.add("x", Tensor::scalar(2.0), true);
    store.add("skip", Tensor::scalar(100.0), false);
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let l = l2_penalty(&mut tape, &store, &bound, 0.0005).unwrap();
    assert!((tape.value(l).item() - 0.002).abs() < 1e-15);

    let empty = ParamStore::new();
    let mut tape = Tape::new();
    let bound = empty.bind(&mut tape);
    let l = l2_penalty(&mut tape, &empty, &bound, 0.0005).unwrap();
    assert_eq!(tape.value(l).item(), 0.0);
}

#[test]
fn scalar_cycle_examples() {
    let s = |v: f64| Tensor::scalar(v);
    let h = s(2.0);
    // W_back = W_{j,i} = 3, W_out = W_{i,j} = 1, W_self = W_{j,j} = 1.5
    assert_eq!(cycle_match_residual(&s(3.0), &s(0.5), &s(1.0), &s(1.5), &h).unwrap(), 0.0);
    let perturbed = cycle_match_residual(&s(3.0), &s(0.6), &s(1.0), &s(1.5), &h).unwrap();
    assert!((perturbed - 0.36).abs() < 1e-12);
    assert_eq!(inverse_residual(&s(2.0), &s(0.5)).unwrap(), 0.0);
    assert!((inverse_residual(&s(2.0), &s(0.6)).unwrap() - 0.08).abs() < 1e-12);
}

#[test]
fn identity_transforms_have_zero_cycle_loss() {
    let g = small_graph(true);
    let mut c = cfg(Variant::MRV);
    c.head_dim = 2;
    c.heads = 1;
    // Give type b two features so every transform can be square.
    let g = g.with_features(1, Tensor::from_rows(&[vec![0.1, 1.0], vec![0.7, 0.3]]).unwrap()).unwrap();
    let mut m = init_model(&g, &c, 0).unwrap();
    let ids: Vec<_> = m.params.iter().filter(|(_, p)| p.name.contains(".W.")).map(|(id, _)| id).collect();
    for id in ids {
        *m.params.get_mut(id) = Tensor::eye(2, 2);
    }
    let l = loss_of(&g, &m);
    assert_eq!(l.cycle_match, 0.0);
    assert_eq!(l.cycle_inverse, 0.0);
}

#[test]
fn zero_betas_leave_the_loss_bitwise_unchanged() {
    let g = small_graph(true);
    let mr = init_model(&g, &cfg(Variant::MR), 3).unwrap();
    let mut c = cfg(Variant::MRV);
    c.beta1 = 0.0;
    c.beta2 = 0.0;
    let mrv = init_model(&g, &c, 3).unwrap();
    assert_eq!(loss_of(&g, &mr).total.to_bits(), loss_of(&g, &mrv).total.to_bits());
}

#[test]
fn multi_task_with_one_labeled_type_matches_base() {
    let g = small_graph(false);
    let base = init_model(&g, &cfg(Variant::BASE), 4).unwrap();
    let m = init_model(&g, &cfg(Variant::M), 4).unwrap();
    assert_eq!(m.tasks.len(), 1);
    assert_eq!(loss_of(&g, &base).total.to_bits(), loss_of(&g, &m).total.to_bits());
}

#[test]
fn task_resolution() {
    let g = small_graph(true);
    let mut c = cfg(Variant::M);
    c.main_task = Some("b".into());
    let m = init_model(&g, &c, 0).unwrap();
    assert_eq!(m.tasks.iter().map(|t| t.name.as_str()).collect::<Vec<_>>(), vec!["b", "a"]);
    c.main_task = Some("nope".into());
    assert!(matches!(init_model(&g, &c, 0), Err(ModelError::UnknownTask(_))));
}

#[test]
fn argmax_ties_go_low() {
    let z = Tensor::from_rows(&[vec![1.0, 1.0, 0.0], vec![0.0, 2.0, 2.0]]).unwrap();
    assert_eq!(predict(&z), vec![0, 1]);
}

#[test]
fn masks_follow_splits() {
    let g = small_graph(true);
    let m = init_model(&g, &cfg(Variant::M), 0).unwrap();
    let types: Vec<usize> = m.tasks.iter().map(|t| t.node_type).collect();
    let splits = split_dataset(&g, &types, [0.8, 0.1, 0.1], 0);
    let train = masks(&g, &m, &splits, SplitKind::Train);
    assert_eq!(train.len(), 2);
    assert_eq!(train[0].rows, splits[0].train);
}
