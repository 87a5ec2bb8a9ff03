//! Define-by-run reverse-mode differentiation over dense f64 matrices.
//!
//! A [`Tape`] records every primitive as it executes; [`Tape::backward`]
//! walks the record once in reverse and accumulates exact gradients.
//! Vectors are single-column matrices, scalars are 1x1. Every op validates
//! shapes up front and checks its output for NaN/Inf, so numeric faults
//! surface at the op that produced them.

use std::rc::Rc;

use ndarray::{s, Array2, Axis};
use thiserror::Error;

/// Dense row-major matrix of 64-bit reals.
pub type Mat = Array2<f64>;

#[derive(Error, Debug)]
pub enum NnError {
    #[error("{op}: shape error: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("{op}: segment error: {detail}")]
    Segment { op: &'static str, detail: String },
    #[error("{op}: non-finite value in output")]
    NumericFault { op: &'static str },
    #[error("empty batch")]
    EmptyBatch,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("gradient missing for parameter {0}")]
    MissingGrad(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Matmul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulColVec(Var, Var),
    Scale(Var, f64),
    AddRowVec(Var, Var),
    ConcatCols(Vec<Var>),
    Transpose(Var),
    GatherRows(Var, Rc<Vec<usize>>),
    SegmentSum(Var, Rc<Vec<usize>>),
    SegmentSoftmax(Var, Rc<Vec<usize>>),
    LeakyRelu(Var, f64),
    Elu(Var, f64),
    Sigmoid(Var),
    RowSoftmax(Var),
    RowCosine(Var, Var),
    RowDot(Var, Var),
    Square(Var),
    Mean(Var),
    Sum(Var),
    SquaredNorm(Var),
    SoftmaxCrossEntropy(Var, Rc<Vec<usize>>),
    SigmoidBce(Var, Rc<Vec<f64>>),
    MseConst(Var, Rc<Vec<f64>>),
    GradReverse(Var, f64),
}

struct Node {
    value: Mat,
    op: Op,
    needs_grad: bool,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
pub struct Grads {
    grads: Vec<Option<Mat>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Mat> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn check_finite(op: &'static str, m: &Mat) -> Result<(), NnError> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NnError::NumericFault { op })
    }
}

fn check_segments(
    op: &'static str,
    offsets: &[usize],
    rows: usize,
) -> Result<(), NnError> {
    if offsets.len() < 2 || offsets[0] != 0 || *offsets.last().unwrap() != rows {
        return Err(NnError::Segment {
            op,
            detail: format!(
                "offsets must start at 0 and end at {rows}, got {:?}/{:?}",
                offsets.first(),
                offsets.last()
            ),
        });
    }
    if offsets.windows(2).any(|w| w[0] > w[1]) {
        return Err(NnError::Segment {
            op,
            detail: "offsets must be non-decreasing".to_string(),
        });
    }
    Ok(())
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Mat, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Trainable leaf: gradients are accumulated for it.
    pub fn param(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.ncols() != vb.nrows() {
            return Err(NnError::Shape {
                op: "matmul",
                detail: format!("{:?} x {:?}", va.dim(), vb.dim()),
            });
        }
        let out = va.dot(vb);
        check_finite("matmul", &out)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Matmul(a, b), needs))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), NnError> {
        if self.value(a).dim() != self.value(b).dim() {
            return Err(NnError::Shape {
                op,
                detail: format!("{:?} vs {:?}", self.value(a).dim(), self.value(b).dim()),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.same_shape("add", a, b)?;
        let out = self.value(a) + self.value(b);
        check_finite("add", &out)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add(a, b), needs))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a) - self.value(b);
        check_finite("sub", &out)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Sub(a, b), needs))
    }

    /// Elementwise product of same-shape matrices.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a) * self.value(b);
        check_finite("mul", &out)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Mul(a, b), needs))
    }

    /// Scales each row of `a` (n, m) by the matching entry of column vector
    /// `c` (n, 1).
    pub fn mul_col_vec(&mut self, a: Var, c: Var) -> Result<Var, NnError> {
        let (va, vc) = (self.value(a), self.value(c));
        if vc.ncols() != 1 || vc.nrows() != va.nrows() {
            return Err(NnError::Shape {
                op: "mul_col_vec",
                detail: format!("{:?} vs {:?}", va.dim(), vc.dim()),
            });
        }
        let mut out = va.clone();
        for (mut row, &f) in out.rows_mut().into_iter().zip(vc.column(0)) {
            row.mapv_inplace(|x| x * f);
        }
        check_finite("mul_col_vec", &out)?;
        let needs = self.needs(a) || self.needs(c);
        Ok(self.push(out, Op::MulColVec(a, c), needs))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var, NnError> {
        let out = self.value(a) * factor;
        check_finite("scale", &out)?;
        let needs = self.needs(a);
        Ok(self.push(out, Op::Scale(a, factor), needs))
    }

    /// Adds row vector `r` (1, m) to every row of `a` (n, m).
    pub fn add_row_vec(&mut self, a: Var, r: Var) -> Result<Var, NnError> {
        let (va, vr) = (self.value(a), self.value(r));
        if vr.nrows() != 1 || vr.ncols() != va.ncols() {
            return Err(NnError::Shape {
                op: "add_row_vec",
                detail: format!("{:?} vs {:?}", va.dim(), vr.dim()),
            });
        }
        let out = va + &vr.row(0);
        check_finite("add_row_vec", &out)?;
        let needs = self.needs(a) || self.needs(r);
        Ok(self.push(out, Op::AddRowVec(a, r), needs))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        if parts.is_empty() {
            return Err(NnError::Shape {
                op: "concat_cols",
                detail: "no inputs".to_string(),
            });
        }
        let rows = self.value(parts[0]).nrows();
        let total: usize = parts.iter().map(|&p| self.value(p).ncols()).sum();
        let mut out = Mat::zeros((rows, total));
        let mut col = 0;
        for &p in parts {
            let v = self.value(p);
            if v.nrows() != rows {
                return Err(NnError::Shape {
                    op: "concat_cols",
                    detail: format!("row mismatch: {} vs {}", v.nrows(), rows),
                });
            }
            out.slice_mut(s![.., col..col + v.ncols()]).assign(v);
            col += v.ncols();
        }
        check_finite("concat_cols", &out)?;
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), needs))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, NnError> {
        let out = self.value(a).t().to_owned();
        let needs = self.needs(a);
        Ok(self.push(out, Op::Transpose(a), needs))
    }

    /// Row gather: output row k is input row `idx[k]`.
    pub fn gather_rows(&mut self, a: Var, idx: Rc<Vec<usize>>) -> Result<Var, NnError> {
        let va = self.value(a);
        let n = va.nrows();
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(NnError::Shape {
                op: "gather_rows",
                detail: format!("row index {bad} out of range for {n} rows"),
            });
        }
        let mut out = Mat::zeros((idx.len(), va.ncols()));
        for (k, &i) in idx.iter().enumerate() {
            out.row_mut(k).assign(&va.row(i));
        }
        let needs = self.needs(a);
        Ok(self.push(out, Op::GatherRows(a, idx), needs))
    }

    /// Sums row blocks: segment s covers input rows
    /// `offsets[s]..offsets[s+1]`.
    pub fn segment_sum(&mut self, a: Var, offsets: Rc<Vec<usize>>) -> Result<Var, NnError> {
        let va = self.value(a);
        check_segments("segment_sum", &offsets, va.nrows())?;
        let segs = offsets.len() - 1;
        let mut out = Mat::zeros((segs, va.ncols()));
        for sidx in 0..segs {
            for row in offsets[sidx]..offsets[sidx + 1] {
                let src = va.row(row);
                let mut dst = out.row_mut(sidx);
                dst += &src;
            }
        }
        check_finite("segment_sum", &out)?;
        let needs = self.needs(a);
        Ok(self.push(out, Op::SegmentSum(a, offsets), needs))
    }

    /// Softmax within each row block of a column vector (E, 1), stabilized
    /// by per-segment max subtraction. Empty segments stay empty.
    pub fn segment_softmax(&mut self, a: Var, offsets: Rc<Vec<usize>>) -> Result<Var, NnError> {
        let va = self.value(a);
        if va.ncols() != 1 {
            return Err(NnError::Shape {
                op: "segment_softmax",
                detail: format!("expected column vector, got {:?}", va.dim()),
            });
        }
        check_segments("segment_softmax", &offsets, va.nrows())?;
        let mut out = Mat::zeros(va.raw_dim());
        for w in offsets.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            if lo == hi {
                continue;
            }
            let max = (lo..hi).map(|r| va[(r, 0)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for r in lo..hi {
                let e = (va[(r, 0)] - max).exp();
                out[(r, 0)] = e;
                total += e;
            }
            for r in lo..hi {
                out[(r, 0)] /= total;
            }
        }
        check_finite("segment_softmax", &out)?;
        let needs = self.needs(a);
        Ok(self.push(out, Op::SegmentSoftmax(a, offsets), needs))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var, NnError> {
        let out = self.value(a).mapv(|x| if x > 0.0 { x } else { slope * x });
        check_finite("leaky_relu", &out)?;
        let needs = self.needs(a);
        Ok(self.push(out, Op::LeakyRelu(a, slope), needs))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, NnError> {
        self.leaky_relu(a, 0.0)
    }

    pub fn elu(&mut self, a: Var, alpha: f64) -> Result<Var, NnError> {
        let out = self
            .value(a)
            .mapv(|x| if x > 0.0 { x } else { alpha * (x.exp() - 1.0) });
        check_finite("elu", &out)?;
        let needs = self.needs(a);
        Ok(self.push(out, Op::Elu(a, alpha), needs))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, NnError> {
        let out = self.value(a).mapv(|x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        });
        check_finite("sigmoid", &out)?;
        let needs = self.needs(a);
        Ok(self.push(out, Op::Sigmoid(a), needs))
    }

    /// Row-wise softmax with max subtraction.
    pub fn row_softmax(&mut self, a: Var) -> Result<Var, NnError> {
        let va = self.value(a);
        let mut out = va.clone();
        for mut row in out.rows_mut() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        check_finite("row_softmax", &out)?;
        let needs = self.needs(a);
        Ok(self.push(out, Op::RowSoftmax(a), needs))
    }

    /// Cosine similarity of matching rows: (B, d) x (B, d) -> (B, 1).
    pub fn row_cosine(&mut self, u: Var, v: Var) -> Result<Var, NnError> {
        self.same_shape("row_cosine", u, v)?;
        let (vu, vv) = (self.value(u), self.value(v));
        let b = vu.nrows();
        let mut out = Mat::zeros((b, 1));
        for r in 0..b {
            let (ur, vr) = (vu.row(r), vv.row(r));
            let dot = ur.dot(&vr);
            let nu = ur.dot(&ur);
            let nv = vr.dot(&vr);
            out[(r, 0)] = dot / (nu * nv).sqrt();
        }
        check_finite("row_cosine", &out)?;
        let needs = self.needs(u) || self.needs(v);
        Ok(self.push(out, Op::RowCosine(u, v), needs))
    }

    /// Dot product of matching rows: (B, d) x (B, d) -> (B, 1).
    pub fn row_dot(&mut self, u: Var, v: Var) -> Result<Var, NnError> {
        self.same_shape("row_dot", u, v)?;
        let (vu, vv) = (self.value(u), self.value(v));
        let b = vu.nrows();
        let mut out = Mat::zeros((b, 1));
        for r in 0..b {
            out[(r, 0)] = vu.row(r).dot(&vv.row(r));
        }
        check_finite("row_dot", &out)?;
        let needs = self.needs(u) || self.needs(v);
        Ok(self.push(out, Op::RowDot(u, v), needs))
    }

    pub fn square(&mut self, a: Var) -> Result<Var, NnError> {
        let out = self.value(a).mapv(|x| x * x);
        check_finite("square", &out)?;
        let needs = self.needs(a);
        Ok(self.push(out, Op::Square(a), needs))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, NnError> {
        let va = self.value(a);
        if va.is_empty() {
            return Err(NnError::EmptyBatch);
        }
        let m = va.sum() / va.len() as f64;
        let out = Mat::from_elem((1, 1), m);
        check_finite("mean", &out)?;
        let needs = self.needs(a);
        Ok(self.push(out, Op::Mean(a), needs))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, NnError> {
        let out = Mat::from_elem((1, 1), self.value(a).sum());
        check_finite("sum", &out)?;
        let needs = self.needs(a);
        Ok(self.push(out, Op::Sum(a), needs))
    }

    /// Sum of squared entries (squared Frobenius norm), as a 1x1 scalar.
    pub fn squared_norm(&mut self, a: Var) -> Result<Var, NnError> {
        let total: f64 = self.value(a).iter().map(|x| x * x).sum();
        let out = Mat::from_elem((1, 1), total);
        check_finite("squared_norm", &out)?;
        let needs = self.needs(a);
        Ok(self.push(out, Op::SquaredNorm(a), needs))
    }

    /// Mean cross-entropy of row-softmax over integer class labels, fused
    /// for stability (log-sum-exp with max subtraction).
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        labels: Rc<Vec<usize>>,
    ) -> Result<Var, NnError> {
        let vl = self.value(logits);
        let (b, c) = vl.dim();
        if b == 0 {
            return Err(NnError::EmptyBatch);
        }
        if labels.len() != b {
            return Err(NnError::Shape {
                op: "softmax_cross_entropy",
                detail: format!("{} labels for {b} rows", labels.len()),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(NnError::Shape {
                op: "softmax_cross_entropy",
                detail: format!("label {bad} out of range for {c} classes"),
            });
        }
        let mut total = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            let row = vl.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
            total += lse - row[label];
        }
        let out = Mat::from_elem((1, 1), total / b as f64);
        check_finite("softmax_cross_entropy", &out)?;
        let needs = self.needs(logits);
        Ok(self.push(out, Op::SoftmaxCrossEntropy(logits, labels), needs))
    }

    /// Mean binary cross-entropy on logits (B, 1) against targets in
    /// [0, 1], in the overflow-free log1p form.
    pub fn sigmoid_bce(&mut self, logits: Var, targets: Rc<Vec<f64>>) -> Result<Var, NnError> {
        let vl = self.value(logits);
        if vl.ncols() != 1 {
            return Err(NnError::Shape {
                op: "sigmoid_bce",
                detail: format!("expected column vector, got {:?}", vl.dim()),
            });
        }
        let b = vl.nrows();
        if b == 0 {
            return Err(NnError::EmptyBatch);
        }
        if targets.len() != b {
            return Err(NnError::Shape {
                op: "sigmoid_bce",
                detail: format!("{} targets for {b} rows", targets.len()),
            });
        }
        let mut total = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let x = vl[(r, 0)];
            total += x.max(0.0) - x * t + (-x.abs()).exp().ln_1p();
        }
        let out = Mat::from_elem((1, 1), total / b as f64);
        check_finite("sigmoid_bce", &out)?;
        let needs = self.needs(logits);
        Ok(self.push(out, Op::SigmoidBce(logits, targets), needs))
    }

    /// Mean squared error against constant targets, elementwise over the
    /// whole matrix.
    pub fn mse_const(&mut self, pred: Var, targets: Rc<Vec<f64>>) -> Result<Var, NnError> {
        let vp = self.value(pred);
        if vp.is_empty() {
            return Err(NnError::EmptyBatch);
        }
        if targets.len() != vp.len() {
            return Err(NnError::Shape {
                op: "mse_const",
                detail: format!("{} targets for {} entries", targets.len(), vp.len()),
            });
        }
        let total: f64 = vp
            .iter()
            .zip(targets.iter())
            .map(|(&p, &t)| (p - t) * (p - t))
            .sum();
        let out = Mat::from_elem((1, 1), total / vp.len() as f64);
        check_finite("mse_const", &out)?;
        let needs = self.needs(pred);
        Ok(self.push(out, Op::MseConst(pred, targets), needs))
    }

    /// Identity forward; backward multiplies the gradient by `-scale`.
    /// Realizes the adversarial min-max as a single pass.
    pub fn grad_reverse(&mut self, a: Var, scale: f64) -> Result<Var, NnError> {
        let out = self.value(a).clone();
        let needs = self.needs(a);
        Ok(self.push(out, Op::GradReverse(a, scale), needs))
    }

    /// Reverse pass from a 1x1 scalar loss. Returns gradients for every
    /// node that required them.
    pub fn backward(&mut self, loss: Var) -> Result<Grads, NnError> {
        if self.value(loss).dim() != (1, 1) {
            return Err(NnError::Shape {
                op: "backward",
                detail: format!("loss must be 1x1, got {:?}", self.value(loss).dim()),
            });
        }
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Mat::from_elem((1, 1), 1.0));

        for id in (0..=loss.0).rev() {
            if grads[id].is_none() || !self.nodes[id].needs_grad {
                continue;
            }
            let g = grads[id].take().unwrap();
            self.propagate(Var(id), &g, &mut grads)?;
            grads[id] = Some(g);
        }
        Ok(Grads { grads })
    }

    fn propagate(
        &self,
        node: Var,
        g: &Mat,
        grads: &mut [Option<Mat>],
    ) -> Result<(), NnError> {
        // accumulate into an input's slot if that input wants gradients
        let accum = |grads: &mut [Option<Mat>], v: Var, delta: Mat| {
            if !self.needs(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => *existing += &delta,
                slot @ None => *slot = Some(delta),
            }
        };

        match &self.nodes[node.0].op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.needs(*a) {
                    accum(grads, *a, g.dot(&vb.t()));
                }
                if self.needs(*b) {
                    accum(grads, *b, va.t().dot(g));
                }
            }
            Op::Add(a, b) => {
                accum(grads, *a, g.clone());
                accum(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accum(grads, *a, g.clone());
                accum(grads, *b, -g);
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    accum(grads, *a, g * self.value(*b));
                }
                if self.needs(*b) {
                    accum(grads, *b, g * self.value(*a));
                }
            }
            Op::MulColVec(a, c) => {
                let (va, vc) = (self.value(*a), self.value(*c));
                if self.needs(*a) {
                    let mut da = g.clone();
                    for (mut row, &f) in da.rows_mut().into_iter().zip(vc.column(0)) {
                        row.mapv_inplace(|x| x * f);
                    }
                    accum(grads, *a, da);
                }
                if self.needs(*c) {
                    let mut dc = Mat::zeros(vc.raw_dim());
                    for r in 0..va.nrows() {
                        dc[(r, 0)] = g.row(r).dot(&va.row(r));
                    }
                    accum(grads, *c, dc);
                }
            }
            Op::Scale(a, f) => accum(grads, *a, g * *f),
            Op::AddRowVec(a, r) => {
                accum(grads, *a, g.clone());
                if self.needs(*r) {
                    let col_sums = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accum(grads, *r, col_sums);
                }
            }
            Op::ConcatCols(parts) => {
                let mut col = 0;
                for &p in parts {
                    let w = self.value(p).ncols();
                    if self.needs(p) {
                        accum(grads, p, g.slice(s![.., col..col + w]).to_owned());
                    }
                    col += w;
                }
            }
            Op::Transpose(a) => accum(grads, *a, g.t().to_owned()),
            Op::GatherRows(a, idx) => {
                if self.needs(*a) {
                    let mut da = Mat::zeros(self.value(*a).raw_dim());
                    for (k, &i) in idx.iter().enumerate() {
                        let mut row = da.row_mut(i);
                        row += &g.row(k);
                    }
                    accum(grads, *a, da);
                }
            }
            Op::SegmentSum(a, offsets) => {
                if self.needs(*a) {
                    let mut da = Mat::zeros(self.value(*a).raw_dim());
                    for (sidx, w) in offsets.windows(2).enumerate() {
                        for r in w[0]..w[1] {
                            da.row_mut(r).assign(&g.row(sidx));
                        }
                    }
                    accum(grads, *a, da);
                }
            }
            Op::SegmentSoftmax(a, offsets) => {
                if self.needs(*a) {
                    let alpha = self.value(node); // output is the softmax
                    let mut da = Mat::zeros(alpha.raw_dim());
                    for w in offsets.windows(2) {
                        let (lo, hi) = (w[0], w[1]);
                        let inner: f64 =
                            (lo..hi).map(|r| g[(r, 0)] * alpha[(r, 0)]).sum();
                        for r in lo..hi {
                            da[(r, 0)] = alpha[(r, 0)] * (g[(r, 0)] - inner);
                        }
                    }
                    accum(grads, *a, da);
                }
            }
            Op::LeakyRelu(a, slope) => {
                if self.needs(*a) {
                    let va = self.value(*a);
                    let mut da = g.clone();
                    da.zip_mut_with(va, |gv, &x| {
                        if x <= 0.0 {
                            *gv *= slope;
                        }
                    });
                    accum(grads, *a, da);
                }
            }
            Op::Elu(a, alpha) => {
                if self.needs(*a) {
                    let va = self.value(*a);
                    let out = self.value(node);
                    let mut da = g.clone();
                    ndarray::Zip::from(&mut da).and(va).and(out).for_each(
                        |gv, &x, &y| {
                            if x <= 0.0 {
                                *gv *= y + alpha;
                            }
                        },
                    );
                    accum(grads, *a, da);
                }
            }
            Op::Sigmoid(a) => {
                if self.needs(*a) {
                    let out = self.value(node);
                    let da = g * &out.mapv(|s| s * (1.0 - s));
                    accum(grads, *a, da);
                }
            }
            Op::RowSoftmax(a) => {
                if self.needs(*a) {
                    let sm = self.value(node);
                    let mut da = Mat::zeros(sm.raw_dim());
                    for r in 0..sm.nrows() {
                        let inner = g.row(r).dot(&sm.row(r));
                        for c in 0..sm.ncols() {
                            da[(r, c)] = sm[(r, c)] * (g[(r, c)] - inner);
                        }
                    }
                    accum(grads, *a, da);
                }
            }
            Op::RowCosine(u, v) => {
                let (vu, vv) = (self.value(*u), self.value(*v));
                let cosv = self.value(node);
                let mut du = Mat::zeros(vu.raw_dim());
                let mut dv = Mat::zeros(vv.raw_dim());
                for r in 0..vu.nrows() {
                    let ur = vu.row(r);
                    let vr = vv.row(r);
                    let nu = ur.dot(&ur);
                    let nv = vr.dot(&vr);
                    let denom = (nu * nv).sqrt();
                    let c = cosv[(r, 0)];
                    let gr = g[(r, 0)];
                    for k in 0..vu.ncols() {
                        du[(r, k)] = gr * (vr[k] / denom - c * ur[k] / nu);
                        dv[(r, k)] = gr * (ur[k] / denom - c * vr[k] / nv);
                    }
                }
                accum(grads, *u, du);
                accum(grads, *v, dv);
            }
            Op::RowDot(u, v) => {
                let (vu, vv) = (self.value(*u), self.value(*v));
                if self.needs(*u) {
                    let mut du = vv.clone();
                    for (mut row, &f) in du.rows_mut().into_iter().zip(g.column(0)) {
                        row.mapv_inplace(|x| x * f);
                    }
                    accum(grads, *u, du);
                }
                if self.needs(*v) {
                    let mut dv = vu.clone();
                    for (mut row, &f) in dv.rows_mut().into_iter().zip(g.column(0)) {
                        row.mapv_inplace(|x| x * f);
                    }
                    accum(grads, *v, dv);
                }
            }
            Op::Square(a) => {
                if self.needs(*a) {
                    accum(grads, *a, g * &(self.value(*a) * 2.0));
                }
            }
            Op::Mean(a) => {
                let va = self.value(*a);
                let coef = g[(0, 0)] / va.len() as f64;
                accum(grads, *a, Mat::from_elem(va.raw_dim(), coef));
            }
            Op::Sum(a) => {
                let va = self.value(*a);
                accum(grads, *a, Mat::from_elem(va.raw_dim(), g[(0, 0)]));
            }
            Op::SquaredNorm(a) => {
                if self.needs(*a) {
                    accum(grads, *a, self.value(*a) * (2.0 * g[(0, 0)]));
                }
            }
            Op::SoftmaxCrossEntropy(logits, labels) => {
                if self.needs(*logits) {
                    let vl = self.value(*logits);
                    let b = vl.nrows();
                    let coef = g[(0, 0)] / b as f64;
                    let mut da = Mat::zeros(vl.raw_dim());
                    for (r, &label) in labels.iter().enumerate() {
                        let row = vl.row(r);
                        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        let total: f64 = row.iter().map(|&x| (x - max).exp()).sum();
                        for c in 0..vl.ncols() {
                            let p = (vl[(r, c)] - max).exp() / total;
                            let onehot = if c == label { 1.0 } else { 0.0 };
                            da[(r, c)] = coef * (p - onehot);
                        }
                    }
                    accum(grads, *logits, da);
                }
            }
            Op::SigmoidBce(logits, targets) => {
                if self.needs(*logits) {
                    let vl = self.value(*logits);
                    let b = vl.nrows();
                    let coef = g[(0, 0)] / b as f64;
                    let mut da = Mat::zeros(vl.raw_dim());
                    for (r, &t) in targets.iter().enumerate() {
                        let x = vl[(r, 0)];
                        let s = if x >= 0.0 {
                            1.0 / (1.0 + (-x).exp())
                        } else {
                            let e = x.exp();
                            e / (1.0 + e)
                        };
                        da[(r, 0)] = coef * (s - t);
                    }
                    accum(grads, *logits, da);
                }
            }
            Op::MseConst(pred, targets) => {
                if self.needs(*pred) {
                    let vp = self.value(*pred);
                    let coef = 2.0 * g[(0, 0)] / vp.len() as f64;
                    let mut da = vp.clone();
                    let mut it = targets.iter();
                    da.mapv_inplace(|p| coef * (p - it.next().unwrap()));
                    accum(grads, *pred, da);
                }
            }
            Op::GradReverse(a, scale) => {
                accum(grads, *a, g * (-*scale));
            }
        }
        Ok(())
    }
}
