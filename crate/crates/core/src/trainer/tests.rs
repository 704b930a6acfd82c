use super::*;
use crate::config::Variant;
use crate::synth::{generate, SynthSpec};

fn synth_graph() -> HetGraph {
    generate(&SynthSpec { authors: 15, papers: 15, ..Default::default() }).unwrap().add_self_loops().unwrap()
}

fn small_model() -> ModelConfig {
    ModelConfig { layers: 2, heads: 2, head_dim: 4, ..Default::default() }
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let g = synth_graph();
    let m = ModelConfig { dropout: 0.0, ..small_model() };
    let t = TrainConfig { lr: 0.0, max_epochs: 5, patience: 5, ..Default::default() };
    let out = train(&g, &m, &t).unwrap();
    let init = init_model(&g, &m, t.seed).unwrap();
    assert_eq!(out.model.params, init.params);
    let first = &out.history.epochs[0];
    for r in &out.history.epochs {
        assert_eq!(r.loss, first.loss);
        assert_eq!(r.val_micro_f1, first.val_micro_f1);
    }
}

#[test]
fn same_seed_same_history() {
    let g = synth_graph();
    let t = TrainConfig { max_epochs: 8, patience: 8, seed: 11, ..Default::default() };
    let a = train(&g, &small_model().with_variant(Variant::MRV), &t).unwrap();
    let b = train(&g, &small_model().with_variant(Variant::MRV), &t).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.model.params, b.model.params);
}

#[test]
fn best_epoch_restored() {
    let g = synth_graph();
    let t = TrainConfig { max_epochs: 30, patience: 10, seed: 2, ..Default::default() };
    let out = train(&g, &small_model(), &t).unwrap();
    let best = out.history.best().unwrap();
    let again = evaluate(&g, &out.model, &out.splits, t.seed).unwrap();
    assert_eq!(again, out.report);
    let test = out.report.select(&out.model.main_task().name, SplitKind::Test).next().unwrap();
    assert_eq!(test.micro_f1, best.test_micro_f1);
    let max_val = out.history.epochs.iter().map(|r| r.val_micro_f1).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(best.val_micro_f1, max_val);
}

#[test]
fn patience_stops_early() {
    let g = synth_graph();
    let t = TrainConfig { lr: 0.0, max_epochs: 50, patience: 3, ..Default::default() };
    let out = train(&g, &small_model(), &t).unwrap();
    assert_eq!(out.history.epochs.len(), 4);
    assert_eq!(out.history.best_epoch, 1);
}

#[test]
fn history_csv_header() {
    let g = synth_graph();
    let t = TrainConfig { max_epochs: 2, patience: 2, ..Default::default() };
    let out = train(&g, &small_model(), &t).unwrap();
    let csv = out.history.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("epoch,loss_total,loss_class,loss_cycle,train_microf1,val_microf1,test_microf1"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn exploding_learning_rate_reports_non_finite() {
    let g = synth_graph();
    let t = TrainConfig { lr: 1e200, max_epochs: 20, patience: 20, ..Default::default() };
    match train(&g, &small_model(), &t) {
        Err(TrainError::NonFinite { at, .. }) => assert!(!at.op.is_empty()),
        other => panic!("expected a non-finite abort, got {:?}", other.map(|o| o.history.epochs.len())),
    }
}

#[test]
fn repeats_use_consecutive_seeds() {
    let g = synth_graph();
    let t = TrainConfig { max_epochs: 3, patience: 3, seed: 7, ..Default::default() };
    let runs = train_repeats(&g, &small_model(), &t, 3).unwrap();
    assert_eq!(runs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![7, 8, 9]);
    let single = train(&g, &small_model(), &TrainConfig { seed: 8, ..t }).unwrap();
    assert_eq!(runs[1].history, single.history);
}
