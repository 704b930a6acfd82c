//! Full-batch training with Adam, dropout, L2 and validation-based model
//! selection.

mod adam;
mod init;
mod split;

use std::fmt::Write as _;

use log::{debug, info};
use rayon::prelude::*;

use crate::autodiff::{AutodiffError, NonFinite, Tape, Tensor};
use crate::config::{ConfigError, ModelConfig, TrainConfig};
use crate::eval::{self, EvalError, EvalReport, EvalRow, SplitKind};
use crate::hetgraph::HetGraph;
use crate::model::{self, total_loss, HetSannModel, LossBreakdown, ModelError, TaskMask};

pub use adam::{adam_step, Adam, AdamConfig, AdamState};
pub use init::{glorot_uniform, stream_rng, RngStream};
pub use split::{split_dataset, split_labels, TaskSplit};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("task `{0}` has no labeled nodes in its training split")]
    EmptyTrainingSplit(String),
    #[error("non-finite loss at epoch {epoch}; first non-finite value at {at}")]
    NonFinite { epoch: usize, at: NonFinite },
}

/// Main-task metrics after one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Training objective of the epoch's update, dropout included.
    pub loss: LossBreakdown,
    pub train_micro_f1: f64,
    pub val_micro_f1: f64,
    pub test_micro_f1: f64,
    /// Inference-mode cross-entropy on the validation split.
    pub val_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept; 0 before any epoch.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub const HEADER: &'static str = "epoch,loss_total,loss_class,loss_cycle,train_microf1,val_microf1,test_microf1";

    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.get(self.best_epoch.checked_sub(1)?)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::HEADER);
        for r in &self.epochs {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.epoch,
                r.loss.total,
                r.loss.class_sum,
                r.loss.cycle(),
                r.train_micro_f1,
                r.val_micro_f1,
                r.test_micro_f1
            )
            .unwrap();
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub seed: u64,
    /// Parameters restored to the best validation epoch.
    pub model: HetSannModel,
    pub history: TrainHistory,
    /// Aligned with `model.tasks`.
    pub splits: Vec<TaskSplit>,
    /// Every task and split, evaluated with the restored parameters.
    pub report: EvalReport,
}

impl TrainOutcome {
    pub fn main_test_micro_f1(&self) -> f64 {
        let task = &self.model.main_task().name;
        self.report.select(task, SplitKind::Test).next().map_or(f64::NAN, |r| r.micro_f1)
    }
}

/// Builds a model with parameters drawn from the run seed's init stream.
pub fn init_model(g: &HetGraph, config: &ModelConfig, seed: u64) -> Result<HetSannModel, ModelError> {
    HetSannModel::new(g, config, &mut stream_rng(seed, RngStream::Init))
}

/// Per-task masks for one split.
pub fn masks(g: &HetGraph, model: &HetSannModel, splits: &[TaskSplit], kind: SplitKind) -> Vec<TaskMask> {
    model
        .tasks
        .iter()
        .zip(splits)
        .map(|(t, s)| s.mask(g.labels(t.node_type).expect("tasks are labeled types"), kind))
        .collect()
}

fn mean_cross_entropy(logits: &Tensor, mask: &TaskMask) -> f64 {
    let mut total = 0.0;
    for (&r, &y) in mask.rows.iter().zip(&mask.targets) {
        let row = logits.row_slice(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    total / mask.rows.len().max(1) as f64
}

fn truth_vector(g: &HetGraph, node_type: usize) -> Vec<usize> {
    g.labels(node_type)
        .map(|l| l.values.iter().map(|v| v.unwrap_or(usize::MAX)).collect())
        .unwrap_or_default()
}

/// Micro and macro F1 of every task on every non-empty split.
pub fn evaluate(g: &HetGraph, model: &HetSannModel, splits: &[TaskSplit], seed: u64) -> Result<EvalReport, TrainError> {
    let logits = model.predict_logits(g)?;
    let mut report = EvalReport::default();
    for ((task, split), z) in model.tasks.iter().zip(splits).zip(&logits) {
        let pred = model::predict(z);
        let truth = truth_vector(g, task.node_type);
        for kind in SplitKind::ALL {
            let subset = split.get(kind);
            if subset.is_empty() {
                continue;
            }
            let counts = eval::ConfusionCounts::new(&pred, &truth, subset, task.classes)?;
            report.rows.push(EvalRow {
                task: task.name.clone(),
                split: kind,
                micro_f1: counts.micro_f1(),
                macro_f1: counts.macro_f1(),
                seed,
            });
        }
    }
    Ok(report)
}

/// Trains one model with `train.seed`.
pub fn train(g: &HetGraph, model_config: &ModelConfig, train_config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    model_config.validate()?;
    train_config.validate()?;
    let seed = train_config.seed;
    let mut model = init_model(g, model_config, seed)?;
    let task_types: Vec<usize> = model.tasks.iter().map(|t| t.node_type).collect();
    let splits = split_dataset(g, &task_types, train_config.ratios(), seed);
    let train_masks = masks(g, &model, &splits, SplitKind::Train);
    if let Some(t) = model.tasks.iter().zip(&train_masks).find(|(_, m)| m.rows.is_empty()) {
        return Err(TrainError::EmptyTrainingSplit(t.0.name.clone()));
    }
    let eval_masks: Vec<TaskMask> =
        [SplitKind::Train, SplitKind::Val, SplitKind::Test].iter().map(|&k| masks(g, &model, &splits, k)[0].clone()).collect();
    let main_truth = truth_vector(g, model.main_task().node_type);

    let mut adam = Adam::new(
        AdamConfig {
            lr: train_config.lr,
            beta1: train_config.adam_beta1,
            beta2: train_config.adam_beta2,
            eps: train_config.adam_eps,
        },
        &model.params,
    );
    let mut dropout_rng = stream_rng(seed, RngStream::Dropout);
    let mut history = TrainHistory::default();
    let mut best_params = model.params.clone();
    let mut best_key = (f64::NEG_INFINITY, f64::NEG_INFINITY);

    for epoch in 1..=train_config.max_epochs {
        let mut tape = Tape::new();
        let bound = model.params.bind(&mut tape);
        let pass = model.forward(&mut tape, &bound, g, &mut dropout_rng, true)?;
        let loss = total_loss(&mut tape, &model, &bound, &pass, &train_masks, train_config.reg_weight)?;
        if let Some(at) = tape.first_non_finite() {
            return Err(TrainError::NonFinite { epoch, at: at.clone() });
        }
        let breakdown = loss.values(&tape);
        let mut grads = tape.backward(loss.total)?;
        let grads = model.params.collect_grads(&bound, &mut grads);
        adam.step(&mut model.params, &grads)?;

        let logits = model.predict_logits(g)?;
        let main_logits = &logits[0];
        let pred = model::predict(main_logits);
        let f1 = |m: &TaskMask| -> Result<f64, TrainError> {
            if m.rows.is_empty() {
                return Ok(f64::NAN);
            }
            Ok(eval::micro_f1(&pred, &main_truth, &m.rows)?)
        };
        let record = EpochRecord {
            epoch,
            loss: breakdown,
            train_micro_f1: f1(&eval_masks[0])?,
            val_micro_f1: f1(&eval_masks[1])?,
            test_micro_f1: f1(&eval_masks[2])?,
            val_loss: mean_cross_entropy(main_logits, &eval_masks[1]),
        };
        debug!(
            "seed {seed} epoch {epoch}: loss {:.5} train {:.3} val {:.3}",
            record.loss.total, record.train_micro_f1, record.val_micro_f1
        );
        // Higher validation F1 wins; ties go to the lower validation loss.
        let key = if eval_masks[1].rows.is_empty() {
            (0.0, -record.loss.total)
        } else {
            (record.val_micro_f1, -record.val_loss)
        };
        if key > best_key {
            best_key = key;
            history.best_epoch = epoch;
            best_params = model.params.clone();
        }
        history.epochs.push(record);
        if epoch - history.best_epoch >= train_config.patience {
            info!("seed {seed}: early stop at epoch {epoch}, best epoch {}", history.best_epoch);
            break;
        }
    }

    model.params = best_params;
    let report = evaluate(g, &model, &splits, seed)?;
    Ok(TrainOutcome { seed, model, history, splits, report })
}

/// Independent runs with seeds `base_seed, base_seed + 1, ...`, executed in
/// parallel. Results are in seed order.
pub fn train_repeats(
    g: &HetGraph,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    repeats: usize,
) -> Result<Vec<TrainOutcome>, TrainError> {
    (0..repeats as u64)
        .into_par_iter()
        .map(|k| {
            let cfg = TrainConfig { seed: train_config.seed + k, ..train_config.clone() };
            train(g, model_config, &cfg)
        })
        .collect()
}

#[cfg(test)]
mod tests;
