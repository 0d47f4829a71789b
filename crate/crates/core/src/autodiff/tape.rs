//! Operation tape for reverse-mode differentiation.
//!
//! Every forward op evaluates eagerly, stores its result on the tape and
//! remembers its inputs. [`Tape::backward`] walks the recording in reverse
//! and accumulates adjoints into every node that requires a gradient.
//!
//! ```
//! use loha::autodiff::Tape;
//! use loha::Matrix;
//!
//! let mut tape = Tape::new();
//! let w = tape.param(Matrix::scalar(3.0));
//! let sq = tape.square(w).unwrap();
//! let loss = tape.sum(sq).unwrap();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(w).item(), 6.0);
//! ```

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{LohaError, Result};
use crate::graph::SparseOperator;
use crate::matrix::{gemm, Matrix};

/// Rows whose Euclidean norm is below this normalize to the zero vector.
pub const NORM_EPS: f64 = 1e-12;

static NEXT_TAPE: AtomicU64 = AtomicU64::new(0);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulScalar(Var, Var),
    WeightedSum(Vec<Var>, Var),
    Scale(Var, f64),
    AddConst(Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Cos(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Abs(Var),
    RowSum(Var),
    RowMean(Var),
    RowStd(Var),
    L2RowNormalize(Var),
    Transpose(Var),
    Diag(Var),
    Sum(Var),
    Mean(Var),
    Element(Var, usize, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SpMM(Arc<SparseOperator>, Var),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    requires_grad: bool,
    op: Op,
}

/// Single-threaded recording of a differentiable computation.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of the root with respect to `v`; zeros when `v` does not
    /// influence the root or does not require a gradient.
    pub fn get(&self, v: Var) -> Matrix {
        assert_eq!(v.tape, self.tape, "variable from a different tape");
        match &self.grads[v.index] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.index];
                Matrix::zeros(r, c)
            }
        }
    }
}

fn shape_err(op: &'static str, a: &Matrix, b: &Matrix) -> LohaError {
    LohaError::Shape {
        op,
        lhs: a.shape(),
        rhs: b.shape(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.leaf(value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.leaf(value, false)
    }

    pub fn leaf(&mut self, value: Matrix, requires_grad: bool) -> Var {
        self.push_unchecked(value, requires_grad, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        assert_eq!(v.tape, self.id, "variable from a different tape");
        &self.nodes[v.index].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.index].requires_grad
    }

    /// Constant copy of `v`: same value, cut from the gradient flow.
    pub fn detach(&mut self, v: Var) -> Result<Var> {
        self.check(v)?;
        let value = self.value(v).clone();
        Ok(self.constant(value))
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(LohaError::Usage("variable does not belong to this tape".into()));
        }
        Ok(())
    }

    fn push_unchecked(&mut self, value: Matrix, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn push(&mut self, name: &'static str, value: Matrix, inputs: &[Var], op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(LohaError::numeric(name, "non-finite output"));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.index].requires_grad);
        Ok(self.push_unchecked(value, requires_grad, op))
    }

    fn unary(&mut self, name: &'static str, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        self.check(a)?;
        let value = self.value(a).map(f);
        self.push(name, value, &[a], op)
    }

    fn same_shape(&self, name: &'static str, a: Var, b: Var) -> Result<()> {
        self.check(a)?;
        self.check(b)?;
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(shape_err(name, x, y));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let value = self.value(a).matmul(self.value(b))?;
        self.push("matmul", value, &[a, b], Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push("add", value, &[a, b], Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push("sub", value, &[a, b], Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push("mul", value, &[a, b], Op::Mul(a, b))
    }

    /// `a + 1 bᵀ`: adds the row vector `b` (1×c) to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (x, r) = (self.value(a), self.value(b));
        if r.rows() != 1 || r.cols() != x.cols() {
            return Err(shape_err("add_row", x, r));
        }
        let mut value = x.clone();
        for i in 0..value.rows() {
            for (o, &v) in value.row_mut(i).iter_mut().zip(r.as_slice()) {
                *o += v;
            }
        }
        self.push("add_row", value, &[a, b], Op::AddRow(a, b))
    }

    /// `s · a` where `s` is a 1×1 variable.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        self.check(a)?;
        self.check(s)?;
        let sv = self.value(s);
        if sv.shape() != (1, 1) {
            return Err(shape_err("mul_scalar", self.value(a), sv));
        }
        let value = self.value(a).scale(sv.item());
        self.push("mul_scalar", value, &[a, s], Op::MulScalar(a, s))
    }

    /// `Σ_k w_k · parts[k]` with `w` a vector of `parts.len()` entries.
    pub fn weighted_sum(&mut self, parts: &[Var], w: Var) -> Result<Var> {
        self.check(w)?;
        let first = *parts
            .first()
            .ok_or_else(|| LohaError::Usage("weighted_sum of no terms".into()))?;
        let wv = self.value(w);
        if wv.len() != parts.len() || wv.rows().min(wv.cols()) != 1 {
            return Err(LohaError::Shape {
                op: "weighted_sum",
                lhs: (parts.len(), 1),
                rhs: wv.shape(),
            });
        }
        let (r, c) = self.value(first).shape();
        let mut value = Matrix::zeros(r, c);
        for (k, &p) in parts.iter().enumerate() {
            self.check(p)?;
            let pv = self.value(p);
            if pv.shape() != (r, c) {
                return Err(shape_err("weighted_sum", self.value(first), pv));
            }
            value.axpy(self.value(w).as_slice()[k], pv);
        }
        let mut inputs = parts.to_vec();
        inputs.push(w);
        self.push("weighted_sum", value, &inputs, Op::WeightedSum(parts.to_vec(), w))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary("scale", a, |x| c * x, Op::Scale(a, c))
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary("add_const", a, |x| x + c, Op::AddConst(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary("relu", a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary("tanh", a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary("sigmoid", a, |x| 1.0 / (1.0 + (-x).exp()), Op::Sigmoid(a))
    }

    pub fn cos(&mut self, a: Var) -> Result<Var> {
        self.unary("cos", a, f64::cos, Op::Cos(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary("exp", a, f64::exp, Op::Exp(a))
    }

    /// Natural log; every input entry must be strictly positive.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        if let Some(bad) = self.value(a).as_slice().iter().find(|&&x| !(x > 0.0)) {
            return Err(LohaError::numeric("log", format!("non-positive input {bad}")));
        }
        self.unary("log", a, f64::ln, Op::Log(a))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary("square", a, |x| x * x, Op::Square(a))
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.unary("abs", a, f64::abs, Op::Abs(a))
    }

    /// n×c → n×1.
    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let x = self.value(a);
        let value = Matrix::from_fn(x.rows(), 1, |r, _| x.row(r).iter().sum());
        self.push("row_sum", value, &[a], Op::RowSum(a))
    }

    pub fn row_mean(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let x = self.value(a);
        if x.cols() == 0 {
            return Err(LohaError::Precondition("row_mean of zero columns".into()));
        }
        let c = x.cols() as f64;
        let value = Matrix::from_fn(x.rows(), 1, |r, _| x.row(r).iter().sum::<f64>() / c);
        self.push("row_mean", value, &[a], Op::RowMean(a))
    }

    /// Population standard deviation of each row (divides by the column count).
    pub fn row_std(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let x = self.value(a);
        if x.cols() < 2 {
            return Err(LohaError::Precondition(format!(
                "row_std needs at least 2 columns, got {}",
                x.cols()
            )));
        }
        let value = Matrix::from_fn(x.rows(), 1, |r, _| row_std(x.row(r)).1);
        self.push("row_std", value, &[a], Op::RowStd(a))
    }

    /// Scales each row to unit Euclidean norm; rows with norm below
    /// [`NORM_EPS`] become zero.
    pub fn l2_row_normalize(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let mut value = self.value(a).clone();
        for r in 0..value.rows() {
            let row = value.row_mut(r);
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            let inv = if norm < NORM_EPS { 0.0 } else { 1.0 / norm };
            row.iter_mut().for_each(|v| *v *= inv);
        }
        self.push("l2_row_normalize", value, &[a], Op::L2RowNormalize(a))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let value = self.value(a).transpose();
        self.push("transpose", value, &[a], Op::Transpose(a))
    }

    /// Diagonal of a square matrix as an n×1 column.
    pub fn diag(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let x = self.value(a);
        if x.rows() != x.cols() {
            return Err(shape_err("diag", x, x));
        }
        let value = Matrix::from_fn(x.rows(), 1, |r, _| x[(r, r)]);
        self.push("diag", value, &[a], Op::Diag(a))
    }

    /// Sum of all entries, as 1×1.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let value = Matrix::scalar(self.value(a).sum());
        self.push("sum", value, &[a], Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let x = self.value(a);
        if x.is_empty() {
            return Err(LohaError::Precondition("mean of an empty matrix".into()));
        }
        let value = Matrix::scalar(x.sum() / x.len() as f64);
        self.push("mean", value, &[a], Op::Mean(a))
    }

    /// Entry `(r, c)` as a 1×1 variable.
    pub fn element(&mut self, a: Var, r: usize, c: usize) -> Result<Var> {
        self.check(a)?;
        let x = self.value(a);
        if r >= x.rows() || c >= x.cols() {
            return Err(LohaError::Shape {
                op: "element",
                lhs: x.shape(),
                rhs: (r, c),
            });
        }
        let value = Matrix::scalar(x[(r, c)]);
        self.push("element", value, &[a], Op::Element(a, r, c))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        for &p in parts {
            self.check(p)?;
        }
        let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Matrix::hstack(&mats).map_err(|_| LohaError::Shape {
            op: "concat_cols",
            lhs: mats.first().map_or((0, 0), |m| m.shape()),
            rhs: mats.iter().find(|m| m.rows() != mats[0].rows()).map_or((0, 0), |m| m.shape()),
        })?;
        self.push("concat_cols", value, parts, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        for &p in parts {
            self.check(p)?;
        }
        let cols = parts.first().map_or(0, |&p| self.value(p).cols());
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let m = self.value(p);
            if m.cols() != cols {
                return Err(shape_err("concat_rows", self.value(parts[0]), m));
            }
            data.extend_from_slice(m.as_slice());
            rows += m.rows();
        }
        let value = Matrix::from_vec(rows, cols, data)?;
        self.push("concat_rows", value, parts, Op::ConcatRows(parts.to_vec()))
    }

    /// `op · x` for a sparse operator.
    pub fn spmm(&mut self, op: &Arc<SparseOperator>, x: Var) -> Result<Var> {
        self.check(x)?;
        let value = op.apply(self.value(x))?;
        self.push("sparse_dense_matmul", value, &[x], Op::SpMM(Arc::clone(op), x))
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        self.check(root)?;
        let rv = self.value(root);
        if rv.shape() != (1, 1) {
            return Err(LohaError::Usage(format!(
                "backward needs a 1x1 root, got {:?}",
                rv.shape()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[root.index] = Some(Matrix::scalar(1.0));

        for i in (0..=root.index).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(&node.op, &node.value, &g, &mut grads);
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if !matches!(node.op, Op::Leaf) {
                grads[i] = None;
            }
        }
        Ok(Gradients {
            tape: self.id,
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, delta: Matrix) {
        if !self.nodes[v.index].requires_grad {
            return;
        }
        match &mut grads[v.index] {
            Some(g) => g.axpy(1.0, &delta),
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(&self, op: &Op, out: &Matrix, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let val = |v: Var| &self.nodes[v.index].value;
        let needs = |v: Var| self.nodes[v.index].requires_grad;
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if needs(*a) {
                    self.accumulate(grads, *a, gemm(g, false, val(*b), true));
                }
                if needs(*b) {
                    self.accumulate(grads, *b, gemm(val(*a), true, g, false));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                if needs(*a) {
                    self.accumulate(grads, *a, g.zip_map(val(*b), |x, y| x * y));
                }
                if needs(*b) {
                    self.accumulate(grads, *b, g.zip_map(val(*a), |x, y| x * y));
                }
            }
            Op::AddRow(a, b) => {
                self.accumulate(grads, *a, g.clone());
                if needs(*b) {
                    let mut col = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, &v) in col.as_mut_slice().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    self.accumulate(grads, *b, col);
                }
            }
            Op::MulScalar(a, s) => {
                let sv = val(*s).item();
                if needs(*a) {
                    self.accumulate(grads, *a, g.scale(sv));
                }
                if needs(*s) {
                    self.accumulate(grads, *s, Matrix::scalar(g.frobenius_dot(val(*a))));
                }
            }
            Op::WeightedSum(parts, w) => {
                let wv = val(*w);
                for (k, &p) in parts.iter().enumerate() {
                    if needs(p) {
                        self.accumulate(grads, p, g.scale(wv.as_slice()[k]));
                    }
                }
                if needs(*w) {
                    let mut gw = Matrix::zeros(wv.rows(), wv.cols());
                    for (k, &p) in parts.iter().enumerate() {
                        gw.as_mut_slice()[k] = g.frobenius_dot(val(p));
                    }
                    self.accumulate(grads, *w, gw);
                }
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, g.scale(*c)),
            Op::AddConst(a) => self.accumulate(grads, *a, g.clone()),
            Op::Relu(a) => {
                let d = g.zip_map(val(*a), |gi, x| if x > 0.0 { gi } else { 0.0 });
                self.accumulate(grads, *a, d);
            }
            Op::Tanh(a) => self.accumulate(grads, *a, g.zip_map(out, |gi, y| gi * (1.0 - y * y))),
            Op::Sigmoid(a) => {
                self.accumulate(grads, *a, g.zip_map(out, |gi, y| gi * y * (1.0 - y)))
            }
            Op::Cos(a) => self.accumulate(grads, *a, g.zip_map(val(*a), |gi, x| -gi * x.sin())),
            Op::Exp(a) => self.accumulate(grads, *a, g.zip_map(out, |gi, y| gi * y)),
            Op::Log(a) => self.accumulate(grads, *a, g.zip_map(val(*a), |gi, x| gi / x)),
            Op::Square(a) => self.accumulate(grads, *a, g.zip_map(val(*a), |gi, x| 2.0 * gi * x)),
            Op::Abs(a) => {
                let d = g.zip_map(val(*a), |gi, x| {
                    if x > 0.0 {
                        gi
                    } else if x < 0.0 {
                        -gi
                    } else {
                        0.0
                    }
                });
                self.accumulate(grads, *a, d);
            }
            Op::RowSum(a) | Op::RowMean(a) => {
                let x = val(*a);
                let scale = if matches!(op, Op::RowMean(_)) {
                    1.0 / x.cols() as f64
                } else {
                    1.0
                };
                let d = Matrix::from_fn(x.rows(), x.cols(), |r, _| scale * g[(r, 0)]);
                self.accumulate(grads, *a, d);
            }
            Op::RowStd(a) => {
                let x = val(*a);
                let c = x.cols() as f64;
                let mut d = Matrix::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    let (mean, std) = row_std(x.row(r));
                    if std == 0.0 {
                        continue;
                    }
                    let k = g[(r, 0)] / (c * std);
                    for (o, &v) in d.row_mut(r).iter_mut().zip(x.row(r)) {
                        *o = k * (v - mean);
                    }
                }
                self.accumulate(grads, *a, d);
            }
            Op::L2RowNormalize(a) => {
                let x = val(*a);
                let mut d = Matrix::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    let norm = x.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm < NORM_EPS {
                        continue;
                    }
                    let y = out.row(r);
                    let gr = g.row(r);
                    let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for (c, o) in d.row_mut(r).iter_mut().enumerate() {
                        *o = (gr[c] - y[c] * dot) / norm;
                    }
                }
                self.accumulate(grads, *a, d);
            }
            Op::Transpose(a) => self.accumulate(grads, *a, g.transpose()),
            Op::Diag(a) => {
                let n = g.rows();
                let mut d = Matrix::zeros(n, n);
                for i in 0..n {
                    d[(i, i)] = g[(i, 0)];
                }
                self.accumulate(grads, *a, d);
            }
            Op::Sum(a) => {
                let (r, c) = val(*a).shape();
                self.accumulate(grads, *a, Matrix::filled(r, c, g.item()));
            }
            Op::Mean(a) => {
                let (r, c) = val(*a).shape();
                let k = g.item() / (r * c) as f64;
                self.accumulate(grads, *a, Matrix::filled(r, c, k));
            }
            Op::Element(a, r, c) => {
                let (rows, cols) = val(*a).shape();
                let mut d = Matrix::zeros(rows, cols);
                d[(*r, *c)] = g.item();
                self.accumulate(grads, *a, d);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = val(p).cols();
                    if needs(p) {
                        let d = Matrix::from_fn(g.rows(), w, |r, c| g[(r, offset + c)]);
                        self.accumulate(grads, p, d);
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (h, w) = val(p).shape();
                    if needs(p) {
                        let d = Matrix::from_fn(h, w, |r, c| g[(offset + r, c)]);
                        self.accumulate(grads, p, d);
                    }
                    offset += h;
                }
            }
            Op::SpMM(sp, x) => {
                let d = sp
                    .apply_transpose(g)
                    .expect("shapes were checked in the forward pass");
                self.accumulate(grads, *x, d);
            }
        }
    }
}

fn row_std(row: &[f64]) -> (f64, f64) {
    let c = row.len() as f64;
    let mean = row.iter().sum::<f64>() / c;
    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_forward_and_kink() {
        let mut t = Tape::new();
        let x = t.param(Matrix::from_rows(&[vec![-1.0, 2.0]]).unwrap());
        let y = t.relu(x).unwrap();
        assert_eq!(t.value(y).as_slice(), &[0.0, 2.0]);

        for (w, expect) in [(0.5, 1.0), (-0.5, 0.0), (0.0, 0.0)] {
            let mut t = Tape::new();
            let w = t.param(Matrix::scalar(w));
            let r = t.relu(w).unwrap();
            let g = t.backward(r).unwrap();
            assert_eq!(g.get(w).item(), expect);
        }
    }

    #[test]
    fn square_sum_gradient() {
        let mut t = Tape::new();
        let w = t.param(Matrix::scalar(3.0));
        let s = t.square(w).unwrap();
        let root = t.sum(s).unwrap();
        assert_eq!(t.backward(root).unwrap().get(w).item(), 6.0);
    }

    #[test]
    fn non_scalar_root_is_usage_error() {
        let mut t = Tape::new();
        let w = t.param(Matrix::zeros(2, 1));
        assert!(matches!(t.backward(w), Err(LohaError::Usage(_))));
    }

    #[test]
    fn constants_never_receive_gradient() {
        let mut t = Tape::new();
        let w = t.param(Matrix::scalar(2.0));
        let c = t.constant(Matrix::scalar(5.0));
        let unused = t.param(Matrix::scalar(1.0));
        let p = t.mul(w, c).unwrap();
        let root = t.sum(p).unwrap();
        let g = t.backward(root).unwrap();
        assert_eq!(g.get(w).item(), 5.0);
        assert_eq!(g.get(c).item(), 0.0);
        assert_eq!(g.get(unused).item(), 0.0);
    }

    #[test]
    fn shape_errors_name_the_op() {
        let mut t = Tape::new();
        let a = t.constant(Matrix::zeros(2, 3));
        let b = t.constant(Matrix::zeros(2, 3));
        let err = t.matmul(a, b).unwrap_err();
        assert!(err.to_string().contains("matmul"), "{err}");
        let col = t.constant(Matrix::zeros(3, 1));
        let err = t.add(a, col).unwrap_err();
        assert!(err.to_string().contains("add"), "{err}");
    }

    #[test]
    fn domain_and_finiteness_errors() {
        let mut t = Tape::new();
        let z = t.constant(Matrix::scalar(0.0));
        assert!(matches!(t.log(z), Err(LohaError::Numeric { .. })));
        let big = t.constant(Matrix::scalar(1e6));
        assert!(matches!(t.exp(big), Err(LohaError::Numeric { .. })));
        let one_col = t.constant(Matrix::zeros(3, 1));
        assert!(matches!(t.row_std(one_col), Err(LohaError::Precondition(_))));
    }

    #[test]
    fn identity_sparse_product() {
        let mut t = Tape::new();
        let x = Matrix::from_fn(3, 2, |r, c| (r + 10 * c) as f64);
        let xv = t.constant(x.clone());
        let id = Arc::new(SparseOperator::identity(3));
        let y = t.spmm(&id, xv).unwrap();
        assert_eq!(t.value(y), &x);
    }

    #[test]
    fn zero_rows_normalize_to_zero() {
        let mut t = Tape::new();
        let x = t.param(Matrix::from_rows(&[vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap());
        let y = t.l2_row_normalize(x).unwrap();
        let v = t.value(y).as_slice();
        assert_eq!(&v[..2], &[0.0, 0.0]);
        assert!((v[2] - 0.6).abs() < 1e-15 && (v[3] - 0.8).abs() < 1e-15);
        let s = t.sum(y).unwrap();
        let g = t.backward(s).unwrap().get(x);
        assert_eq!(g.row(0), &[0.0, 0.0]);
    }

    #[test]
    fn foreign_variable_rejected() {
        let mut a = Tape::new();
        let mut b = Tape::new();
        let v = a.param(Matrix::scalar(1.0));
        assert!(matches!(b.relu(v), Err(LohaError::Usage(_))));
    }
}
