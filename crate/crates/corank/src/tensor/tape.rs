//! Define-by-run tape: every forward op appends a node, `backward` walks
//! the nodes in reverse and accumulates gradients into the leaves.
//!
//! The op set is the closed set needed by the scoring network: matmul,
//! elementwise add/multiply, column-broadcast add, row-broadcast multiply,
//! tanh, sigmoid, masked column softmax, concat, slice, transpose,
//! max-over-time, inverted dropout, ln, clamp and constant scaling.
//! A tape is confined to a single worker; rebuild it for every forward pass.

use rand::{Rng, RngCore};

use super::{Shape, Tensor, TensorError};

/// Handle to a node on a [`Tape`]. Only valid for the tape that created it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Matmul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    /// `m + v` where `v` is a column vector added to every column of `m`.
    AddColVec(Var, Var),
    /// `m * r` where `r` is a row vector scaling every column of `m`.
    MulRowVec(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    SoftmaxCols(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize, usize),
    SliceCols(Var, usize, usize),
    Transpose(Var),
    /// Per-row max over columns; `argmax[r]` is the winning column.
    MaxOverTime(Var, Vec<usize>),
    /// Inverted dropout; mask entries are `0` or `1/(1-p)`.
    Dropout(Var, Vec<f64>),
    Ln(Var),
    ClampMin(Var, f64),
    Scale(Var, f64),
}

struct Node {
    op: Op,
    value: Tensor,
    needs_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(|g| g.take())
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> Var {
        debug_assert!(value.is_finite(), "non-finite value produced on the tape");
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, var: Var) -> bool {
        self.nodes[var.0].needs_grad
    }

    /// Trainable leaf: gradients are accumulated for it.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// Constant leaf (embedding injection, features, fixed masks).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.rows() {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: va.shape(),
                rhs: vb.shape(),
            });
        }
        let out = va.matmul(vb);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Matmul(a, b), out, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "add",
                lhs: va.shape(),
                rhs: vb.shape(),
            });
        }
        let out = va.add(vb);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Add(a, b), out, ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "mul",
                lhs: va.shape(),
                rhs: vb.shape(),
            });
        }
        let out = va.hadamard(vb);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Mul(a, b), out, ng))
    }

    /// Add column vector `v` (`p x 1`) to every column of `m` (`p x q`).
    pub fn add_col_vec(&mut self, m: Var, v: Var) -> Result<Var, TensorError> {
        let (vm, vv) = (self.value(m), self.value(v));
        if vv.cols() != 1 || vv.rows() != vm.rows() {
            return Err(TensorError::ShapeMismatch {
                op: "add_col_vec",
                lhs: vm.shape(),
                rhs: vv.shape(),
            });
        }
        let mut out = vm.clone();
        for r in 0..out.rows() {
            let add = vv.get(r, 0);
            for c in 0..out.cols() {
                out.set(r, c, out.get(r, c) + add);
            }
        }
        let ng = self.needs(m) || self.needs(v);
        Ok(self.push(Op::AddColVec(m, v), out, ng))
    }

    /// Scale column `j` of `m` (`p x q`) by `r[0, j]` (`r` is `1 x q`).
    pub fn mul_row_vec(&mut self, m: Var, r: Var) -> Result<Var, TensorError> {
        let (vm, vr) = (self.value(m), self.value(r));
        if vr.rows() != 1 || vr.cols() != vm.cols() {
            return Err(TensorError::ShapeMismatch {
                op: "mul_row_vec",
                lhs: vm.shape(),
                rhs: vr.shape(),
            });
        }
        let mut out = vm.clone();
        for row in 0..out.rows() {
            for c in 0..out.cols() {
                out.set(row, c, out.get(row, c) * vr.get(0, c));
            }
        }
        let ng = self.needs(m) || self.needs(r);
        Ok(self.push(Op::MulRowVec(m, r), out, ng))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::tanh);
        let ng = self.needs(x);
        self.push(Op::Tanh(x), out, ng)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        let ng = self.needs(x);
        self.push(Op::Sigmoid(x), out, ng)
    }

    /// Column-wise softmax with per-column max subtraction. `mask`, when
    /// given, is row-major over the same shape; `false` entries get
    /// probability exactly 0 and each column must keep at least one `true`.
    pub fn softmax_cols(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var, TensorError> {
        let vx = self.value(x);
        let (rows, cols) = (vx.rows(), vx.cols());
        if let Some(m) = mask {
            if m.len() != rows * cols {
                return Err(TensorError::MaskShape {
                    mask: Shape(m.len(), 1),
                    input: vx.shape(),
                });
            }
        }
        let live = |r: usize, c: usize| mask.is_none_or(|m| m[r * cols + c]);
        let mut out = Tensor::zeros(rows, cols);
        for c in 0..cols {
            let mut max = f64::NEG_INFINITY;
            for r in 0..rows {
                if live(r, c) {
                    max = max.max(vx.get(r, c));
                }
            }
            if max == f64::NEG_INFINITY {
                return Err(TensorError::MaskedColumnEmpty { col: c });
            }
            let mut sum = 0.0;
            for r in 0..rows {
                if live(r, c) {
                    let e = (vx.get(r, c) - max).exp();
                    out.set(r, c, e);
                    sum += e;
                }
            }
            for r in 0..rows {
                if live(r, c) {
                    out.set(r, c, out.get(r, c) / sum);
                }
            }
        }
        let ng = self.needs(x);
        Ok(self.push(Op::SoftmaxCols(x), out, ng))
    }

    /// Stack vertically; all inputs must share a column count.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::EmptyInput { op: "concat_rows" });
        }
        let cols = self.value(parts[0]).cols();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            if v.cols() != cols {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: Shape(rows, cols),
                    rhs: v.shape(),
                });
            }
            rows += v.rows();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::from_vec(rows, cols, data);
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(Op::ConcatRows(parts.to_vec()), out, ng))
    }

    /// Stack horizontally; all inputs must share a row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::EmptyInput { op: "concat_cols" });
        }
        let rows = self.value(parts[0]).rows();
        let mut cols = 0;
        for &p in parts {
            let v = self.value(p);
            if v.rows() != rows {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: Shape(rows, cols),
                    rhs: v.shape(),
                });
            }
            cols += v.cols();
        }
        let mut out = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let v = self.value(p);
            for r in 0..rows {
                for c in 0..v.cols() {
                    out.set(r, offset + c, v.get(r, c));
                }
            }
            offset += v.cols();
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(Op::ConcatCols(parts.to_vec()), out, ng))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var, TensorError> {
        let vx = self.value(x);
        if start >= end || end > vx.rows() {
            return Err(TensorError::SliceRange {
                op: "slice_rows",
                start,
                end,
                shape: vx.shape(),
            });
        }
        let out = Tensor::from_fn(end - start, vx.cols(), |r, c| vx.get(start + r, c));
        let ng = self.needs(x);
        Ok(self.push(Op::SliceRows(x, start, end), out, ng))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var, TensorError> {
        let vx = self.value(x);
        if start >= end || end > vx.cols() {
            return Err(TensorError::SliceRange {
                op: "slice_cols",
                start,
                end,
                shape: vx.shape(),
            });
        }
        let out = Tensor::from_fn(vx.rows(), end - start, |r, c| vx.get(r, start + c));
        let ng = self.needs(x);
        Ok(self.push(Op::SliceCols(x, start, end), out, ng))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let out = self.value(x).transposed();
        let ng = self.needs(x);
        self.push(Op::Transpose(x), out, ng)
    }

    /// Per-row max over columns (`p x q` -> `p x 1`), remembering argmax
    /// positions; gradient flows only to the winning column of each row.
    /// Ties resolve to the lowest column index.
    pub fn max_over_time(&mut self, x: Var) -> Result<Var, TensorError> {
        let vx = self.value(x);
        if vx.cols() == 0 {
            return Err(TensorError::EmptyInput { op: "max_over_time" });
        }
        let mut out = Tensor::zeros(vx.rows(), 1);
        let mut argmax = vec![0usize; vx.rows()];
        for (r, slot) in argmax.iter_mut().enumerate() {
            let mut best = vx.get(r, 0);
            let mut at = 0;
            for c in 1..vx.cols() {
                let v = vx.get(r, c);
                if v > best {
                    best = v;
                    at = c;
                }
            }
            out.set(r, 0, best);
            *slot = at;
        }
        let ng = self.needs(x);
        Ok(self.push(Op::MaxOverTime(x, argmax), out, ng))
    }

    /// Inverted dropout: keeps entries with probability `1 - p` and scales
    /// them by `1/(1-p)` so no rescale is needed at eval time. `p == 0` is
    /// the identity and draws nothing from `rng`.
    pub fn dropout(&mut self, x: Var, p: f64, rng: &mut dyn RngCore) -> Var {
        assert!((0.0..1.0).contains(&p), "dropout p must be in [0, 1)");
        if p == 0.0 {
            return x;
        }
        let keep_scale = 1.0 / (1.0 - p);
        let vx = self.value(x);
        let mask: Vec<f64> = (0..vx.len())
            .map(|_| {
                if rng.random::<f64>() < p {
                    0.0
                } else {
                    keep_scale
                }
            })
            .collect();
        let mut out = vx.clone();
        for (v, m) in out.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        let ng = self.needs(x);
        self.push(Op::Dropout(x, mask), out, ng)
    }

    /// Elementwise natural log; all entries must be positive.
    pub fn ln(&mut self, x: Var) -> Result<Var, TensorError> {
        let vx = self.value(x);
        if let Some(&bad) = vx.data().iter().find(|v| **v <= 0.0) {
            return Err(TensorError::InvalidDomain {
                op: "ln",
                value: bad,
            });
        }
        let out = vx.map(f64::ln);
        let ng = self.needs(x);
        Ok(self.push(Op::Ln(x), out, ng))
    }

    /// Elementwise `max(x, floor)`; gradient passes only where `x > floor`.
    pub fn clamp_min(&mut self, x: Var, floor: f64) -> Var {
        let out = self.value(x).map(|v| v.max(floor));
        let ng = self.needs(x);
        self.push(Op::ClampMin(x, floor), out, ng)
    }

    /// Multiply by a constant scalar.
    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).scale(c);
        let ng = self.needs(x);
        self.push(Op::Scale(x, c), out, ng)
    }

    /// Reverse accumulation from a scalar `loss`. Leaves created with
    /// [`Tape::param`] always receive a gradient; parameters not on any
    /// path to the loss get zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let lv = &self.nodes[loss.0].value;
        if lv.shape() != Shape(1, 1) {
            return Err(TensorError::NonScalarLoss { shape: lv.shape() });
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                continue; // keep the accumulated gradient in place
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }

        // Parameters disconnected from the loss still report zeros.
        for (idx, node) in self.nodes.iter().enumerate() {
            if node.needs_grad && matches!(node.op, Op::Leaf) && grads[idx].is_none() {
                grads[idx] = Some(Tensor::zeros(node.value.rows(), node.value.cols()));
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let accum = |grads: &mut [Option<Tensor>], var: Var, delta: Tensor| {
            if !self.nodes[var.0].needs_grad {
                return;
            }
            match &mut grads[var.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.needs(*a) {
                    accum(grads, *a, g.matmul_nt(vb));
                }
                if self.needs(*b) {
                    accum(grads, *b, va.matmul_tn(g));
                }
            }
            Op::Add(a, b) => {
                accum(grads, *a, g.clone());
                accum(grads, *b, g.clone());
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.needs(*a) {
                    accum(grads, *a, g.hadamard(vb));
                }
                if self.needs(*b) {
                    accum(grads, *b, g.hadamard(va));
                }
            }
            Op::AddColVec(m, v) => {
                accum(grads, *m, g.clone());
                if self.needs(*v) {
                    let mut dv = Tensor::zeros(g.rows(), 1);
                    for r in 0..g.rows() {
                        let mut s = 0.0;
                        for c in 0..g.cols() {
                            s += g.get(r, c);
                        }
                        dv.set(r, 0, s);
                    }
                    accum(grads, *v, dv);
                }
            }
            Op::MulRowVec(m, r) => {
                let (vm, vr) = (self.value(*m), self.value(*r));
                if self.needs(*m) {
                    let mut dm = g.clone();
                    for row in 0..dm.rows() {
                        for c in 0..dm.cols() {
                            dm.set(row, c, dm.get(row, c) * vr.get(0, c));
                        }
                    }
                    accum(grads, *m, dm);
                }
                if self.needs(*r) {
                    let mut dr = Tensor::zeros(1, g.cols());
                    for c in 0..g.cols() {
                        let mut s = 0.0;
                        for row in 0..g.rows() {
                            s += g.get(row, c) * vm.get(row, c);
                        }
                        dr.set(0, c, s);
                    }
                    accum(grads, *r, dr);
                }
            }
            Op::Tanh(x) => {
                let y = &node.value;
                let dx = Tensor::from_fn(y.rows(), y.cols(), |r, c| {
                    let t = y.get(r, c);
                    g.get(r, c) * (1.0 - t * t)
                });
                accum(grads, *x, dx);
            }
            Op::Sigmoid(x) => {
                let y = &node.value;
                let dx = Tensor::from_fn(y.rows(), y.cols(), |r, c| {
                    let s = y.get(r, c);
                    g.get(r, c) * s * (1.0 - s)
                });
                accum(grads, *x, dx);
            }
            Op::SoftmaxCols(x) => {
                // dx_i = y_i * (g_i - sum_k g_k y_k), per column.
                let y = &node.value;
                let mut dx = Tensor::zeros(y.rows(), y.cols());
                for c in 0..y.cols() {
                    let mut dot = 0.0;
                    for r in 0..y.rows() {
                        dot += g.get(r, c) * y.get(r, c);
                    }
                    for r in 0..y.rows() {
                        dx.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                    }
                }
                accum(grads, *x, dx);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let rows = self.value(p).rows();
                    if self.needs(p) {
                        let dp =
                            Tensor::from_fn(rows, g.cols(), |r, c| g.get(offset + r, c));
                        accum(grads, p, dp);
                    }
                    offset += rows;
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let cols = self.value(p).cols();
                    if self.needs(p) {
                        let dp =
                            Tensor::from_fn(g.rows(), cols, |r, c| g.get(r, offset + c));
                        accum(grads, p, dp);
                    }
                    offset += cols;
                }
            }
            Op::SliceRows(x, start, _end) => {
                let vx = self.value(*x);
                let mut dx = Tensor::zeros(vx.rows(), vx.cols());
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        dx.set(start + r, c, g.get(r, c));
                    }
                }
                accum(grads, *x, dx);
            }
            Op::SliceCols(x, start, _end) => {
                let vx = self.value(*x);
                let mut dx = Tensor::zeros(vx.rows(), vx.cols());
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        dx.set(r, start + c, g.get(r, c));
                    }
                }
                accum(grads, *x, dx);
            }
            Op::Transpose(x) => {
                accum(grads, *x, g.transposed());
            }
            Op::MaxOverTime(x, argmax) => {
                let vx = self.value(*x);
                let mut dx = Tensor::zeros(vx.rows(), vx.cols());
                for (r, &c) in argmax.iter().enumerate() {
                    dx.set(r, c, g.get(r, 0));
                }
                accum(grads, *x, dx);
            }
            Op::Dropout(x, mask) => {
                let mut dx = g.clone();
                for (v, m) in dx.data_mut().iter_mut().zip(mask) {
                    *v *= m;
                }
                accum(grads, *x, dx);
            }
            Op::Ln(x) => {
                let vx = self.value(*x);
                let dx = Tensor::from_fn(vx.rows(), vx.cols(), |r, c| {
                    g.get(r, c) / vx.get(r, c)
                });
                accum(grads, *x, dx);
            }
            Op::ClampMin(x, floor) => {
                let vx = self.value(*x);
                let dx = Tensor::from_fn(vx.rows(), vx.cols(), |r, c| {
                    if vx.get(r, c) > *floor {
                        g.get(r, c)
                    } else {
                        0.0
                    }
                });
                accum(grads, *x, dx);
            }
            Op::Scale(x, c) => {
                accum(grads, *x, g.scale(*c));
            }
        }
    }
}

/// Numerically stable logistic function.
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
