use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::eval::SplitKind;
use crate::hetgraph::{HetGraph, Labels};
use crate::model::TaskMask;

use super::{stream_rng, RngStream};

/// Local node indices of one task's labeled nodes, by split. Each list is
/// sorted.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TaskSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl TaskSplit {
    pub fn get(&self, kind: SplitKind) -> &[usize] {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Val => &self.val,
            SplitKind::Test => &self.test,
        }
    }

    pub fn mask(&self, labels: &Labels, kind: SplitKind) -> TaskMask {
        let rows = self.get(kind).to_vec();
        let targets = rows.iter().map(|&i| labels.values[i].expect("split holds labeled nodes")).collect();
        TaskMask { rows, targets }
    }
}

/// Largest-remainder apportionment of `total` over `quotas`; ties go to
/// the lower index.
fn apportion(quotas: &[f64], total: usize) -> Vec<usize> {
    let mut out: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = out.iter().sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &c in order.iter().cycle().take(total.saturating_sub(assigned)) {
        out[c] += 1;
    }
    out
}

/// Class-stratified random split of one type's labeled nodes. The
/// validation and test sizes are `round(N · ratio)` over the `N` nodes of
/// classes with at least 3 members, apportioned across classes; everything
/// else goes to training. Smaller classes go entirely to training.
pub fn split_labels<R: Rng + ?Sized>(labels: &Labels, ratios: [f64; 3], rng: &mut R) -> TaskSplit {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); labels.classes];
    for (i, c) in labels.labeled() {
        by_class[c].push(i);
    }
    let mut split = TaskSplit::default();
    let eligible: Vec<usize> = (0..labels.classes).filter(|&c| by_class[c].len() >= 3).collect();
    for c in (0..labels.classes).filter(|c| !eligible.contains(c) && !by_class[*c].is_empty()) {
        warn!("class {c} has {} labeled node(s); all go to training", by_class[c].len());
        split.train.extend_from_slice(&by_class[c]);
    }
    let n: usize = eligible.iter().map(|&c| by_class[c].len()).sum();
    let val_total = (n as f64 * ratios[1]).round() as usize;
    let test_total = ((n as f64 * ratios[2]).round() as usize).min(n - val_total);
    let sizes = |ratio: f64| -> Vec<f64> { eligible.iter().map(|&c| by_class[c].len() as f64 * ratio).collect() };
    let val_counts = apportion(&sizes(ratios[1]), val_total);
    let test_counts = apportion(&sizes(ratios[2]), test_total);
    for (k, &c) in eligible.iter().enumerate() {
        let nodes = &mut by_class[c];
        nodes.shuffle(rng);
        let v = val_counts[k].min(nodes.len());
        let t = test_counts[k].min(nodes.len() - v);
        split.val.extend_from_slice(&nodes[..v]);
        split.test.extend_from_slice(&nodes[v..v + t]);
        split.train.extend_from_slice(&nodes[v + t..]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    split
}

/// Splits every listed node type, each from its own shuffle of one seeded
/// generator.
pub fn split_dataset(g: &HetGraph, node_types: &[usize], ratios: [f64; 3], seed: u64) -> Vec<TaskSplit> {
    let mut rng = stream_rng(seed, RngStream::Split);
    node_types
        .iter()
        .map(|&p| g.labels(p).map_or_else(TaskSplit::default, |l| split_labels(l, ratios, &mut rng)))
        .collect()
}
