//! Classification metrics and aggregation over repeated runs.

use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("metric over an empty node subset")]
    EmptySubset,
    #[error("node {node} out of range for {len} predictions")]
    OutOfRange { node: usize, len: usize },
    #[error("class {class} out of range for {classes} classes")]
    UnknownClass { class: usize, classes: usize },
}

/// Per-class true positives, false positives and false negatives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: Vec<usize>,
    pub fp: Vec<usize>,
    pub fn_: Vec<usize>,
}

impl ConfusionCounts {
    /// Counts over the nodes in `subset`. `classes` fixes the class set;
    /// predictions or labels outside it are rejected.
    pub fn new(pred: &[usize], truth: &[usize], subset: &[usize], classes: usize) -> Result<Self, EvalError> {
        if subset.is_empty() {
            return Err(EvalError::EmptySubset);
        }
        let mut c = Self { tp: vec![0; classes], fp: vec![0; classes], fn_: vec![0; classes] };
        for &i in subset {
            let len = pred.len().min(truth.len());
            if i >= len {
                return Err(EvalError::OutOfRange { node: i, len });
            }
            let (p, t) = (pred[i], truth[i]);
            if let Some(&class) = [p, t].iter().find(|&&k| k >= classes) {
                return Err(EvalError::UnknownClass { class, classes });
            }
            if p == t {
                c.tp[p] += 1;
            } else {
                c.fp[p] += 1;
                c.fn_[t] += 1;
            }
        }
        Ok(c)
    }

    pub fn classes(&self) -> usize {
        self.tp.len()
    }

    /// `2tp / (2tp + fp + fn)`; a class with no true and no predicted
    /// members scores 0.
    pub fn f1(&self, class: usize) -> f64 {
        let (tp, fp, fn_) = (self.tp[class], self.fp[class], self.fn_[class]);
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            0.0
        } else {
            (2 * tp) as f64 / denom as f64
        }
    }

    pub fn micro_f1(&self) -> f64 {
        let tp: usize = self.tp.iter().sum();
        let fp: usize = self.fp.iter().sum();
        let fn_: usize = self.fn_.iter().sum();
        (2 * tp) as f64 / (2 * tp + fp + fn_) as f64
    }

    pub fn macro_f1(&self) -> f64 {
        (0..self.classes()).map(|c| self.f1(c)).sum::<f64>() / self.classes() as f64
    }
}

fn class_count(pred: &[usize], truth: &[usize], subset: &[usize]) -> usize {
    subset
        .iter()
        .filter(|&&i| i < pred.len() && i < truth.len())
        .map(|&i| pred[i].max(truth[i]) + 1)
        .max()
        .unwrap_or(0)
}

/// Micro-averaged F1 over `subset`; for single-label classification this
/// is the accuracy.
pub fn micro_f1(pred: &[usize], truth: &[usize], subset: &[usize]) -> Result<f64, EvalError> {
    Ok(ConfusionCounts::new(pred, truth, subset, class_count(pred, truth, subset))?.micro_f1())
}

/// Unweighted mean of per-class F1 over `classes` classes.
pub fn macro_f1(pred: &[usize], truth: &[usize], subset: &[usize], classes: usize) -> Result<f64, EvalError> {
    Ok(ConfusionCounts::new(pred, truth, subset, classes)?.macro_f1())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
    pub n: usize,
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.4} ± {:.4}", self.mean, self.std)
    }
}

/// Mean and sample standard deviation; `None` for no runs.
pub fn aggregate_runs(values: &[f64]) -> Option<MeanStd> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Some(MeanStd { mean, std, n })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SplitKind {
    Train,
    Val,
    Test,
}

impl SplitKind {
    pub const ALL: [SplitKind; 3] = [SplitKind::Train, SplitKind::Val, SplitKind::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Val => "val",
            Self::Test => "test",
        }
    }
}

/// One `task,split,micro_f1,macro_f1,seed` row.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub task: String,
    pub split: SplitKind,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub const HEADER: &'static str = "task,split,micro_f1,macro_f1,seed";

    pub fn extend(&mut self, other: EvalReport) {
        self.rows.extend(other.rows);
    }

    pub fn select(&self, task: &str, split: SplitKind) -> impl Iterator<Item = &EvalRow> {
        let task = task.to_string();
        self.rows.iter().filter(move |r| r.task == task && r.split == split)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::HEADER);
        for r in &self.rows {
            writeln!(out, "{},{},{},{},{}", r.task, r.split.as_str(), r.micro_f1, r.macro_f1, r.seed).unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn micro_examples() {
        let truth = [0, 1, 2, 0, 1, 2, 0, 1, 2, 0];
        let all: Vec<usize> = (0..10).collect();
        assert_eq!(micro_f1(&truth, &truth, &all).unwrap(), 1.0);
        let wrong: Vec<usize> = truth.iter().map(|t| (t + 1) % 3).collect();
        assert_eq!(micro_f1(&wrong, &truth, &all).unwrap(), 0.0);
        let mut seven = truth;
        for x in seven.iter_mut().take(3) {
            *x = (*x + 1) % 3;
        }
        assert!((micro_f1(&seven, &truth, &all).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(micro_f1(&truth, &truth, &[]), Err(EvalError::EmptySubset));
    }

    #[test]
    fn macro_hand_example() {
        // class 0: tp 2, fp 1, fn 0; class 1: tp 1, fp 0, fn 1
        let truth = [0, 0, 1, 1];
        let pred = [0, 0, 1, 0];
        let m = macro_f1(&pred, &truth, &[0, 1, 2, 3], 2).unwrap();
        assert!((m - (0.8 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(macro_f1(&truth, &truth, &[0, 1, 2, 3], 2).unwrap(), 1.0);
    }

    #[test]
    fn absent_class_scores_zero() {
        let truth = [0, 1];
        assert_eq!(macro_f1(&truth, &truth, &[0, 1], 3).unwrap(), 2.0 / 3.0);
    }

    #[test]
    fn aggregation() {
        let one = aggregate_runs(&[0.42]).unwrap();
        assert_eq!((one.mean, one.std), (0.42, 0.0));
        let two = aggregate_runs(&[0.6, 0.8]).unwrap();
        assert!((two.mean - 0.7).abs() < 1e-15);
        assert!((two.std - 0.02f64.sqrt()).abs() < 1e-15);
        assert!(aggregate_runs(&[]).is_none());
    }

    #[test]
    fn csv_layout() {
        let r = EvalReport {
            rows: vec![EvalRow { task: "a".into(), split: SplitKind::Test, micro_f1: 0.5, macro_f1: 0.25, seed: 3 }],
        };
        assert_eq!(r.to_csv(), "task,split,micro_f1,macro_f1,seed\na,test,0.5,0.25,3\n");
    }
}
