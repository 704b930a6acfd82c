use super::{ForwardPass, HetSannModel, ModelError};
use crate::autodiff::{AutodiffError, Tape, Tensor, Var};
use crate::params::{BoundParams, ParamStore};

/// Labeled rows of one task that enter a loss or metric.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TaskMask {
    /// Local node indices within the task's node type.
    pub rows: Vec<usize>,
    pub targets: Vec<usize>,
}

/// Loss terms as tape variables.
#[derive(Clone, Debug)]
pub struct LossVars {
    pub class: Vec<Var>,
    pub class_sum: Var,
    /// Already weighted by `beta1`; `None` when the cycle loss is off.
    pub cycle_match: Option<Var>,
    /// Already weighted by `beta2`.
    pub cycle_inverse: Option<Var>,
    pub l2: Var,
    pub total: Var,
}

/// Loss terms as numbers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub class: Vec<f64>,
    pub class_sum: f64,
    pub cycle_match: f64,
    pub cycle_inverse: f64,
    pub l2: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn cycle(&self) -> f64 {
        self.cycle_match + self.cycle_inverse
    }
}

impl LossVars {
    pub fn values(&self, tape: &Tape) -> LossBreakdown {
        let v = |x: Var| tape.value(x).item();
        LossBreakdown {
            class: self.class.iter().map(|&c| v(c)).collect(),
            class_sum: v(self.class_sum),
            cycle_match: self.cycle_match.map_or(0.0, v),
            cycle_inverse: self.cycle_inverse.map_or(0.0, v),
            l2: v(self.l2),
            total: v(self.total),
        }
    }
}

/// Mean cross-entropy over the masked rows.
pub fn classification_loss(tape: &mut Tape, logits: Var, mask: &TaskMask) -> Result<Var, AutodiffError> {
    tape.softmax_cross_entropy(logits, &mask.rows, &mask.targets)
}

/// Unweighted sum of per-task losses.
pub fn multi_task_loss(tape: &mut Tape, losses: &[Var]) -> Result<Var, AutodiffError> {
    let (&first, rest) = losses
        .split_first()
        .ok_or_else(|| AutodiffError::ShapeMismatch { op: "multi_task_loss", detail: "no tasks".into() })?;
    rest.iter().try_fold(first, |acc, &l| tape.add(acc, l))
}

/// `weight · Σ x²` over every regularized parameter.
pub fn l2_penalty(tape: &mut Tape, store: &ParamStore, bound: &BoundParams, weight: f64) -> Result<Var, AutodiffError> {
    let mut acc: Option<Var> = None;
    for (id, p) in store.iter() {
        if !p.regularized {
            continue;
        }
        let sq = tape.square(bound.var(id));
        let s = tape.sum(sq);
        acc = Some(match acc {
            Some(a) => tape.add(a, s)?,
            None => s,
        });
    }
    Ok(match acc {
        Some(a) => tape.scale(a, weight),
        None => tape.constant(Tensor::scalar(0.0)),
    })
}

fn mean_of(tape: &mut Tape, terms: &[Var]) -> Result<Var, AutodiffError> {
    if terms.is_empty() {
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    let s = multi_task_loss(tape, terms)?;
    Ok(tape.scale(s, 1.0 / terms.len() as f64))
}

/// `mean((a - b)²)` over all entries.
fn mse(tape: &mut Tape, a: Var, b: Var) -> Result<Var, AutodiffError> {
    let d = tape.sub(a, b)?;
    let sq = tape.square(d);
    tape.mean(sq)
}

/// The two cycle-consistency terms, weighted by `beta1` and `beta2`.
///
/// The first is the mean, over layers in scope, heads and ordered type
/// pairs `(p_i, p_j)` with transforms both ways, of the mean squared gap
/// between the round trip `W_{j,i} W̃_i W_{i,j} h_j` and `W_{j,j} h_j`,
/// with `h_j` the layer input. The second is the mean over layers, heads
/// and types of `mean((W̃W - I)²) + mean((WW̃ - I)²)`.
pub fn cycle_loss(
    tape: &mut Tape,
    model: &HetSannModel,
    bound: &BoundParams,
    pass: &ForwardPass,
) -> Result<(Var, Var), ModelError> {
    let mut match_terms = Vec::new();
    let mut inverse_terms = Vec::new();
    for (layer, out) in model.layers.iter().zip(&pass.layers) {
        if !model.config.cycle_layers.includes(layer.index) {
            continue;
        }
        let t = layer.in_dims.len();
        for head in &layer.heads {
            let mut self_proj = vec![None; t];
            for pj in 0..t {
                let w_jj = head.transform(pj, pj).ok_or(ModelError::MissingInverse)?;
                let wt = tape.transpose(bound.var(w_jj));
                self_proj[pj] = Some(tape.matmul(out.inputs[pj], wt)?);
            }
            for pj in 0..t {
                if tape.value(out.inputs[pj]).rows() == 0 {
                    continue;
                }
                for pi in (0..t).filter(|&pi| pi != pj) {
                    let (Some(w_ij), Some(w_ji)) = (head.transform(pi, pj), head.transform(pj, pi)) else {
                        continue;
                    };
                    let w_inv = head.inverses[pi].ok_or(ModelError::MissingInverse)?;
                    let mut x = out.inputs[pj];
                    for w in [w_ij, w_inv, w_ji] {
                        let wt = tape.transpose(bound.var(w));
                        x = tape.matmul(x, wt)?;
                    }
                    match_terms.push(mse(tape, x, self_proj[pj].expect("set above"))?);
                }
            }
            for p in 0..t {
                let w = bound.var(head.transform(p, p).ok_or(ModelError::MissingInverse)?);
                let w_inv = bound.var(head.inverses[p].ok_or(ModelError::MissingInverse)?);
                let (n_out, n_in) = (layer.head_dims[p], layer.in_dims[p]);
                let left = tape.matmul(w_inv, w)?;
                let eye_in = tape.constant(Tensor::eye(n_in, n_in));
                let right = tape.matmul(w, w_inv)?;
                let eye_out = tape.constant(Tensor::eye(n_out, n_out));
                let a = mse(tape, left, eye_in)?;
                let b = mse(tape, right, eye_out)?;
                inverse_terms.push(tape.add(a, b)?);
            }
        }
    }
    let m = mean_of(tape, &match_terms)?;
    let i = mean_of(tape, &inverse_terms)?;
    Ok((tape.scale(m, model.config.beta1), tape.scale(i, model.config.beta2)))
}

/// Classification loss of every task, the L2 penalty and, when enabled,
/// the cycle terms. `masks` is aligned with `model.tasks`.
pub fn total_loss(
    tape: &mut Tape,
    model: &HetSannModel,
    bound: &BoundParams,
    pass: &ForwardPass,
    masks: &[TaskMask],
    reg_weight: f64,
) -> Result<LossVars, ModelError> {
    assert_eq!(masks.len(), model.tasks.len(), "one mask per task");
    let mut class = Vec::with_capacity(masks.len());
    for ((task, mask), &logits) in model.tasks.iter().zip(masks).zip(&pass.logits) {
        if mask.rows.is_empty() {
            return Err(ModelError::EmptyMask(task.name.clone()));
        }
        class.push(classification_loss(tape, logits, mask)?);
    }
    let class_sum = multi_task_loss(tape, &class)?;
    let l2 = l2_penalty(tape, &model.params, bound, reg_weight)?;
    let mut total = tape.add(class_sum, l2)?;
    let (mut cycle_match, mut cycle_inverse) = (None, None);
    if model.config.cycle {
        let (m, i) = cycle_loss(tape, model, bound, pass)?;
        total = tape.add(total, m)?;
        total = tape.add(total, i)?;
        cycle_match = Some(m);
        cycle_inverse = Some(i);
    }
    Ok(LossVars { class, class_sum, cycle_match, cycle_inverse, l2, total })
}

fn mean_sq_diff(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

/// `mean((W_{j,i} W̃_i W_{i,j} h - W_{j,j} h)²)` for row states `h`.
pub fn cycle_match_residual(
    w_back: &Tensor,
    w_inv: &Tensor,
    w_out: &Tensor,
    w_self: &Tensor,
    h: &Tensor,
) -> Result<f64, AutodiffError> {
    let round = h.matmul(&w_out.transpose())?.matmul(&w_inv.transpose())?.matmul(&w_back.transpose())?;
    let direct = h.matmul(&w_self.transpose())?;
    if round.shape() != direct.shape() {
        return Err(AutodiffError::ShapeMismatch {
            op: "cycle_match_residual",
            detail: format!("{:?} vs {:?}", round.shape(), direct.shape()),
        });
    }
    Ok(mean_sq_diff(&round, &direct))
}

/// `mean((W̃W - I)²) + mean((WW̃ - I)²)`.
pub fn inverse_residual(w: &Tensor, w_inv: &Tensor) -> Result<f64, AutodiffError> {
    let left = w_inv.matmul(w)?;
    let right = w.matmul(w_inv)?;
    Ok(mean_sq_diff(&left, &Tensor::eye(left.rows(), left.cols()))
        + mean_sq_diff(&right, &Tensor::eye(right.rows(), right.cols())))
}

/// [`inverse_residual`] averaged over the layers in the cycle scope, heads
/// and types; `None` without pseudo-inverses.
pub fn inverse_residual_mean(model: &HetSannModel) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for layer in model.layers.iter().filter(|l| model.config.cycle_layers.includes(l.index)) {
        for head in &layer.heads {
            for (p, inv) in head.inverses.iter().enumerate() {
                let w = model.params.get(head.transform(p, p)?);
                sum += inverse_residual(w, model.params.get((*inv)?)).ok()?;
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}
