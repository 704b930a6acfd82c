//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every operation appends a node holding its forward value and enough
//! information to run its backward rule. Nodes are only ever appended,
//! so the tape order is a topological order and [`Tape::backward`] is a
//! single reverse sweep.

use rand::Rng;

use super::tensor::{matmul_raw, Tensor};
use super::AutodiffError;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    ScaleRows(Var, Var),
    RowDot(Var, Var),
    Concat(Vec<Var>, Axis),
    Slice { x: Var, start: usize, axis: Axis },
    GatherRows(Var, Vec<usize>),
    SegmentSum(Var, Vec<usize>),
    SegmentSoftmax(Var, Vec<usize>),
    Sum(Var),
    Mean(Var),
    Square(Var),
    LeakyRelu(Var, f64),
    Elu(Var),
    Mask(Var, Tensor),
    CrossEntropy { logits: Var, rows: Vec<usize>, probs: Tensor, targets: Vec<usize> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddRow(..) => "add_row",
            Op::ScaleRows(..) => "scale_rows",
            Op::RowDot(..) => "row_dot",
            Op::Concat(..) => "concat",
            Op::Slice { .. } => "slice",
            Op::GatherRows(..) => "gather_rows",
            Op::SegmentSum(..) => "segment_sum",
            Op::SegmentSoftmax(..) => "segment_softmax",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::Square(..) => "square",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::Elu(..) => "elu",
            Op::Mask(..) => "dropout",
            Op::CrossEntropy { .. } => "cross_entropy",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    name: Option<String>,
}

/// Where the first NaN or infinity appeared.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NonFinite {
    pub node: usize,
    pub op: &'static str,
    pub name: Option<String>,
}

impl std::fmt::Display for NonFinite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "node {} ({})", self.node, self.op)?;
        if let Some(name) = &self.name {
            write!(f, " `{name}`")?;
        }
        Ok(())
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    first_non_finite: Option<NonFinite>,
}

/// Gradients of a scalar with respect to every node that required them.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn mismatch(op: &'static str, detail: String) -> AutodiffError {
    AutodiffError::ShapeMismatch { op, detail }
}

fn dims(t: &Tensor) -> String {
    format!("{}x{}", t.rows(), t.cols())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        let idx = self.nodes.len();
        if self.first_non_finite.is_none() && !value.all_finite() {
            self.first_non_finite = Some(NonFinite { node: idx, op: op.name(), name: None });
        }
        self.nodes.push(Node { value, op, requires_grad, name: None });
        Var(idx)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn named_leaf(&mut self, name: impl Into<String>, value: Tensor) -> Var {
        let v = self.leaf(value);
        let name = name.into();
        if let Some(nf) = self.first_non_finite.as_mut() {
            if nf.node == v.0 {
                nf.name = Some(name.clone());
            }
        }
        self.nodes[v.0].name = Some(name);
        v
    }

    /// A value that never receives gradients.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn name(&self, v: Var) -> Option<&str> {
        self.nodes[v.0].name.as_deref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn first_non_finite(&self) -> Option<&NonFinite> {
        self.first_non_finite.as_ref()
    }

    pub fn check_finite(&self) -> Result<(), AutodiffError> {
        match &self.first_non_finite {
            Some(nf) => Err(AutodiffError::NonFinite(nf.clone())),
            None => Ok(()),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        let rg = self.needs(&[a]);
        self.push(out, Op::Transpose(a), rg)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(op, format!("{} vs {}", dims(ta), dims(tb))));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.rows(), ta.cols(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("add", a, b)?;
        let out = self.zip_with(a, b, |x, y| x + y);
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_with(a, b, |x, y| x - y);
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("mul", a, b)?;
        let out = self.zip_with(a, b, |x, y| x * y);
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| c * x);
        let rg = self.needs(&[a]);
        self.push(out, Op::Scale(a, c), rg)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    /// `x[n×d] + b[1×d]`, broadcasting `b` over rows.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var, AutodiffError> {
        let (tx, tb) = (self.value(x), self.value(b));
        if tb.rows() != 1 || tb.cols() != tx.cols() {
            return Err(mismatch("add_row", format!("{} + {}", dims(tx), dims(tb))));
        }
        let mut out = tx.clone();
        for r in 0..out.rows() {
            for (o, &bv) in out.row_slice_mut(r).iter_mut().zip(tb.data()) {
                *o += bv;
            }
        }
        let rg = self.needs(&[x, b]);
        Ok(self.push(out, Op::AddRow(x, b), rg))
    }

    /// Multiplies row `i` of `x[n×d]` by `s[i]` where `s` is `n×1`.
    pub fn scale_rows(&mut self, x: Var, s: Var) -> Result<Var, AutodiffError> {
        let (tx, ts) = (self.value(x), self.value(s));
        if ts.cols() != 1 || ts.rows() != tx.rows() {
            return Err(mismatch("scale_rows", format!("{} by {}", dims(tx), dims(ts))));
        }
        let mut out = tx.clone();
        for r in 0..out.rows() {
            let sv = ts.data()[r];
            out.row_slice_mut(r).iter_mut().for_each(|o| *o *= sv);
        }
        let rg = self.needs(&[x, s]);
        Ok(self.push(out, Op::ScaleRows(x, s), rg))
    }

    /// Row-wise inner products of two `n×d` matrices, as an `n×1` column.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("row_dot", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = (0..ta.rows())
            .map(|r| ta.row_slice(r).iter().zip(tb.row_slice(r)).map(|(x, y)| x * y).sum())
            .collect();
        let rg = self.needs(&[a, b]);
        Ok(self.push(Tensor::column(data), Op::RowDot(a, b), rg))
    }

    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var, AutodiffError> {
        let Some(&first) = parts.first() else {
            return Err(mismatch("concat", "no inputs".into()));
        };
        let out = match axis {
            Axis::Rows => {
                let cols = self.value(first).cols();
                let mut data = Vec::new();
                let mut rows = 0;
                for &p in parts {
                    let t = self.value(p);
                    if t.cols() != cols {
                        return Err(mismatch("concat", format!("cols {} vs {}", t.cols(), cols)));
                    }
                    rows += t.rows();
                    data.extend_from_slice(t.data());
                }
                Tensor::new(rows, cols, data)?
            }
            Axis::Cols => {
                let rows = self.value(first).rows();
                if let Some(&bad) = parts.iter().find(|&&p| self.value(p).rows() != rows) {
                    return Err(mismatch(
                        "concat",
                        format!("rows {} vs {}", self.value(bad).rows(), rows),
                    ));
                }
                let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
                let mut data = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    for &p in parts {
                        data.extend_from_slice(self.value(p).row_slice(r));
                    }
                }
                Tensor::new(rows, cols, data)?
            }
        };
        let rg = self.needs(parts);
        Ok(self.push(out, Op::Concat(parts.to_vec(), axis), rg))
    }

    /// Rows or columns `start..end` of `x`.
    pub fn slice(&mut self, x: Var, start: usize, end: usize, axis: Axis) -> Result<Var, AutodiffError> {
        let t = self.value(x);
        let limit = match axis {
            Axis::Rows => t.rows(),
            Axis::Cols => t.cols(),
        };
        if start > end || end > limit {
            return Err(mismatch("slice", format!("{start}..{end} of {}", dims(t))));
        }
        let out = match axis {
            Axis::Rows => Tensor::new(
                end - start,
                t.cols(),
                t.data()[start * t.cols()..end * t.cols()].to_vec(),
            )?,
            Axis::Cols => {
                let mut data = Vec::with_capacity(t.rows() * (end - start));
                for r in 0..t.rows() {
                    data.extend_from_slice(&t.row_slice(r)[start..end]);
                }
                Tensor::new(t.rows(), end - start, data)?
            }
        };
        let rg = self.needs(&[x]);
        Ok(self.push(out, Op::Slice { x, start, axis }, rg))
    }

    /// Output row `e` is row `idx[e]` of `x`.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var, AutodiffError> {
        let t = self.value(x);
        if let Some(&bad) = idx.iter().find(|&&i| i >= t.rows()) {
            return Err(mismatch("gather_rows", format!("row {bad} of {}", dims(t))));
        }
        let mut data = Vec::with_capacity(idx.len() * t.cols());
        for &i in idx {
            data.extend_from_slice(t.row_slice(i));
        }
        let out = Tensor::new(idx.len(), t.cols(), data)?;
        let rg = self.needs(&[x]);
        Ok(self.push(out, Op::GatherRows(x, idx.to_vec()), rg))
    }

    /// Sums rows of `x[E×d]` into `segments` buckets keyed by `seg[e]`.
    pub fn segment_sum(&mut self, x: Var, seg: &[usize], segments: usize) -> Result<Var, AutodiffError> {
        let t = self.value(x);
        check_segments("segment_sum", t, seg, segments)?;
        let mut out = Tensor::zeros(segments, t.cols());
        for (e, &s) in seg.iter().enumerate() {
            for (o, &v) in out.row_slice_mut(s).iter_mut().zip(t.row_slice(e)) {
                *o += v;
            }
        }
        let rg = self.needs(&[x]);
        Ok(self.push(out, Op::SegmentSum(x, seg.to_vec()), rg))
    }

    /// Softmax of an `E×1` score column within each segment, max-shifted.
    pub fn segment_softmax(&mut self, x: Var, seg: &[usize], segments: usize) -> Result<Var, AutodiffError> {
        let t = self.value(x);
        if t.cols() != 1 {
            return Err(mismatch("segment_softmax", format!("scores {}", dims(t))));
        }
        check_segments("segment_softmax", t, seg, segments)?;
        let out = Tensor::column(segment_softmax_values(t.data(), seg, segments)?);
        let rg = self.needs(&[x]);
        Ok(self.push(out, Op::SegmentSoftmax(x, seg.to_vec()), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        let rg = self.needs(&[x]);
        self.push(out, Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let t = self.value(x);
        if t.is_empty() {
            return Err(mismatch("mean", "empty tensor".into()));
        }
        let out = Tensor::scalar(t.sum() / t.len() as f64);
        let rg = self.needs(&[x]);
        Ok(self.push(out, Op::Mean(x), rg))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v * v);
        let rg = self.needs(&[x]);
        self.push(out, Op::Square(x), rg)
    }

    /// `max(x, slope·x)` elementwise; the derivative at 0 is `slope`.
    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let out = self.value(x).map(|v| leaky_relu(v, slope));
        let rg = self.needs(&[x]);
        self.push(out, Op::LeakyRelu(x, slope), rg)
    }

    pub fn elu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(elu);
        let rg = self.needs(&[x]);
        self.push(out, Op::Elu(x), rg)
    }

    /// Inverted dropout. Identity when not training or when `rate == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, rng: &mut R, training: bool) -> Var {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        if !training || rate == 0.0 {
            return x;
        }
        let keep = 1.0 - rate;
        let t = self.value(x);
        let mask_data = (0..t.len())
            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let mask = Tensor::new(t.rows(), t.cols(), mask_data).expect("mask shape");
        let out = Tensor::new(
            t.rows(),
            t.cols(),
            t.data().iter().zip(mask.data()).map(|(a, m)| a * m).collect(),
        )
        .expect("dropout shape");
        let rg = self.needs(&[x]);
        self.push(out, Op::Mask(x, mask), rg)
    }

    /// Mean over the selected `rows` of `-log softmax(logits[row])[target]`.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        rows: &[usize],
        targets: &[usize],
    ) -> Result<Var, AutodiffError> {
        let t = self.value(logits);
        if rows.is_empty() || rows.len() != targets.len() {
            return Err(mismatch(
                "cross_entropy",
                format!("{} rows, {} targets", rows.len(), targets.len()),
            ));
        }
        let classes = t.cols();
        let mut probs = Tensor::zeros(rows.len(), classes);
        let mut total = 0.0;
        for (k, (&r, &y)) in rows.iter().zip(targets).enumerate() {
            if r >= t.rows() || y >= classes {
                return Err(mismatch("cross_entropy", format!("row {r} target {y} of {}", dims(t))));
            }
            let row = t.row_slice(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let log_denom = denom.ln();
            total += -(row[y] - max - log_denom);
            for (p, &v) in probs.row_slice_mut(k).iter_mut().zip(row) {
                *p = (v - max - log_denom).exp();
            }
        }
        let out = Tensor::scalar(total / rows.len() as f64);
        let rg = self.needs(&[logits]);
        Ok(self.push(
            out,
            Op::CrossEntropy { logits, rows: rows.to_vec(), probs, targets: targets.to_vec() },
            rg,
        ))
    }

    /// Reverse sweep from a `1×1` loss. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients, AutodiffError> {
        let lt = self.value(loss);
        if lt.shape() != [1, 1] {
            return Err(AutodiffError::NonScalarLoss { shape: lt.shape() });
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::ones(1, 1));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.nodes[a.0].requires_grad {
                    self.accumulate(grads, *a, matmul_raw(g, &val(*b).transpose()));
                }
                if self.nodes[b.0].requires_grad {
                    self.accumulate(grads, *b, matmul_raw(&val(*a).transpose(), g));
                }
            }
            Op::Transpose(a) => self.accumulate(grads, *a, g.transpose()),
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                self.accumulate(grads, *a, zip(g, tb, |x, y| x * y));
                self.accumulate(grads, *b, zip(g, ta, |x, y| x * y));
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, g.map(|x| c * x)),
            Op::AddRow(x, b) => {
                self.accumulate(grads, *x, g.clone());
                let mut gb = Tensor::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (o, &v) in gb.data_mut().iter_mut().zip(g.row_slice(r)) {
                        *o += v;
                    }
                }
                self.accumulate(grads, *b, gb);
            }
            Op::ScaleRows(x, s) => {
                let (tx, ts) = (val(*x), val(*s));
                let mut gx = g.clone();
                let mut gs = Tensor::zeros(ts.rows(), 1);
                for r in 0..g.rows() {
                    let sv = ts.data()[r];
                    gx.row_slice_mut(r).iter_mut().for_each(|o| *o *= sv);
                    gs.data_mut()[r] =
                        g.row_slice(r).iter().zip(tx.row_slice(r)).map(|(a, b)| a * b).sum();
                }
                self.accumulate(grads, *x, gx);
                self.accumulate(grads, *s, gs);
            }
            Op::RowDot(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let mut ga = tb.clone();
                let mut gb = ta.clone();
                for r in 0..ta.rows() {
                    let gv = g.data()[r];
                    ga.row_slice_mut(r).iter_mut().for_each(|o| *o *= gv);
                    gb.row_slice_mut(r).iter_mut().for_each(|o| *o *= gv);
                }
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::Concat(parts, axis) => {
                let mut offset = 0;
                for &p in parts {
                    let t = val(p);
                    let piece = match axis {
                        Axis::Rows => {
                            let n = t.rows();
                            let d = g.data()[offset * g.cols()..(offset + n) * g.cols()].to_vec();
                            offset += n;
                            Tensor::new(n, g.cols(), d).expect("concat grad")
                        }
                        Axis::Cols => {
                            let n = t.cols();
                            let mut d = Vec::with_capacity(t.len());
                            for r in 0..g.rows() {
                                d.extend_from_slice(&g.row_slice(r)[offset..offset + n]);
                            }
                            offset += n;
                            Tensor::new(g.rows(), n, d).expect("concat grad")
                        }
                    };
                    self.accumulate(grads, p, piece);
                }
            }
            Op::Slice { x, start, axis } => {
                let t = val(*x);
                let mut gx = Tensor::zeros(t.rows(), t.cols());
                match axis {
                    Axis::Rows => {
                        let c = t.cols();
                        gx.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                    }
                    Axis::Cols => {
                        for r in 0..g.rows() {
                            gx.row_slice_mut(r)[*start..start + g.cols()]
                                .copy_from_slice(g.row_slice(r));
                        }
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::GatherRows(x, idx) => {
                let t = val(*x);
                let mut gx = Tensor::zeros(t.rows(), t.cols());
                for (e, &i) in idx.iter().enumerate() {
                    for (o, &v) in gx.row_slice_mut(i).iter_mut().zip(g.row_slice(e)) {
                        *o += v;
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::SegmentSum(x, seg) => {
                let mut gx = Tensor::zeros(seg.len(), g.cols());
                for (e, &s) in seg.iter().enumerate() {
                    gx.row_slice_mut(e).copy_from_slice(g.row_slice(s));
                }
                self.accumulate(grads, *x, gx);
            }
            Op::SegmentSoftmax(x, seg) => {
                // d x_e = y_e (g_e - sum_{k in seg(e)} y_k g_k)
                let y = node.value.data();
                let segments = seg.iter().copied().max().map_or(0, |m| m + 1);
                let mut dot = vec![0.0; segments];
                for (e, &s) in seg.iter().enumerate() {
                    dot[s] += y[e] * g.data()[e];
                }
                let gx = seg
                    .iter()
                    .enumerate()
                    .map(|(e, &s)| y[e] * (g.data()[e] - dot[s]))
                    .collect();
                self.accumulate(grads, *x, Tensor::column(gx));
            }
            Op::Sum(x) => {
                let t = val(*x);
                self.accumulate(grads, *x, Tensor::filled(t.rows(), t.cols(), g.item()));
            }
            Op::Mean(x) => {
                let t = val(*x);
                let v = g.item() / t.len() as f64;
                self.accumulate(grads, *x, Tensor::filled(t.rows(), t.cols(), v));
            }
            Op::Square(x) => {
                self.accumulate(grads, *x, zip(g, val(*x), |gv, xv| 2.0 * xv * gv));
            }
            Op::LeakyRelu(x, slope) => {
                let s = *slope;
                self.accumulate(grads, *x, zip(g, val(*x), |gv, xv| if xv > 0.0 { gv } else { s * gv }));
            }
            Op::Elu(x) => {
                self.accumulate(
                    grads,
                    *x,
                    zip(g, val(*x), |gv, xv| if xv > 0.0 { gv } else { gv * xv.exp() }),
                );
            }
            Op::Mask(x, mask) => self.accumulate(grads, *x, zip(g, mask, |a, m| a * m)),
            Op::CrossEntropy { logits, rows, probs, targets } => {
                let t = val(*logits);
                let scale = g.item() / rows.len() as f64;
                let mut gl = Tensor::zeros(t.rows(), t.cols());
                for (k, (&r, &y)) in rows.iter().zip(targets).enumerate() {
                    let out = gl.row_slice_mut(r);
                    for (c, (o, &p)) in out.iter_mut().zip(probs.row_slice(k)).enumerate() {
                        let onehot = if c == y { 1.0 } else { 0.0 };
                        *o += scale * (p - onehot);
                    }
                }
                self.accumulate(grads, *logits, gl);
            }
        }
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.rows(), a.cols(), data).expect("zip shape")
}

fn check_segments(op: &'static str, t: &Tensor, seg: &[usize], segments: usize) -> Result<(), AutodiffError> {
    if seg.len() != t.rows() {
        return Err(mismatch(op, format!("{} segment ids for {}", seg.len(), dims(t))));
    }
    if let Some(&bad) = seg.iter().find(|&&s| s >= segments) {
        return Err(mismatch(op, format!("segment {bad} out of {segments}")));
    }
    Ok(())
}

pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

/// Max-shifted softmax of `scores` within each segment. Every segment in
/// `0..segments` must own at least one score.
pub fn segment_softmax_values(scores: &[f64], seg: &[usize], segments: usize) -> Result<Vec<f64>, AutodiffError> {
    let mut max = vec![f64::NEG_INFINITY; segments];
    let mut count = vec![0usize; segments];
    for (&s, &v) in seg.iter().zip(scores) {
        max[s] = max[s].max(v);
        count[s] += 1;
    }
    if let Some(empty) = count.iter().position(|&c| c == 0) {
        return Err(AutodiffError::EmptySegment(empty));
    }
    let mut denom = vec![0.0; segments];
    let exps: Vec<f64> = seg
        .iter()
        .zip(scores)
        .map(|(&s, &v)| {
            let e = (v - max[s]).exp();
            denom[s] += e;
            e
        })
        .collect();
    Ok(exps.iter().zip(seg).map(|(e, &s)| e / denom[s]).collect())
}
