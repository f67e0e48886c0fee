//! Reverse-mode automatic differentiation over [`Matrix`] values.
//!
//! A [`Tape`] records every operation in creation order, so reverse index
//! order is a valid reverse topological order. Nodes are addressed by
//! [`Var`] handles. Each node keeps its value and, once a backward pass has
//! reached it, an accumulated gradient of the same shape.

use std::sync::Arc;

use super::matrix::{matmul_nt_acc, matmul_tn_acc, shape_str, Matrix};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Concatenation axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Stack vertically; column counts must agree.
    Rows,
    /// Join horizontally; row counts must agree.
    Cols,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    BlockMatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Relu(Var),
    Concat(Vec<Var>, Axis),
    Softmax(Var),
    LogSoftmax(Var),
    Sum(Var),
    Scale(Var, f64),
    Square(Var),
    Reshape(Var),
    Gather(Var, Vec<usize>),
}

struct Node {
    value: Arc<Matrix>,
    op: Op,
    requires_grad: bool,
    grad: Option<Matrix>,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    /// Drops every node created after `len` nodes existed. Handles to the
    /// dropped nodes become invalid.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    /// Differentiable input.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(Arc::new(value), Op::Leaf, true)
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(Arc::new(value), Op::Leaf, false)
    }

    /// Non-differentiable input sharing storage with the caller.
    pub fn constant_shared(&mut self, value: Arc<Matrix>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient; zeros if no backward pass has reached `v`.
    pub fn grad(&self, v: Var) -> Matrix {
        let node = &self.nodes[v.0];
        node.grad.clone().unwrap_or_else(|| {
            let (r, c) = node.value.shape();
            Matrix::zeros(r, c)
        })
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push(&mut self, value: Arc<Matrix>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, value: Matrix, op: Op, parents: &[Var]) -> Var {
        let rg = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.push(Arc::new(value), op, rg)
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape(
                op,
                format!("{} vs {}", shape_str(sa), shape_str(sb)),
            ));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.record(value, Op::MatMul(a, b), &[a, b]))
    }

    /// Left-multiplies every consecutive `n`-row block of `x` by the `n×n`
    /// matrix `a`, i.e. `(I ⊗ a)·x` without forming the Kronecker product.
    pub fn block_matmul(&mut self, a: Var, x: Var) -> Result<Var> {
        let ((n, an), (xr, xc)) = (self.shape(a), self.shape(x));
        if n != an || n == 0 || xr % n != 0 {
            return Err(Error::shape(
                "block_matmul",
                format!("{} blocks over {}", shape_str((n, an)), shape_str((xr, xc))),
            ));
        }
        let (av, xv) = (self.value(a), self.value(x));
        let mut value = Matrix::zeros(xr, xc);
        for b in 0..xr / n {
            for i in 0..n {
                let out = &mut value.data_mut()[(b * n + i) * xc..(b * n + i + 1) * xc];
                for j in 0..n {
                    let w = av.get(i, j);
                    if w != 0.0 {
                        for (o, v) in out.iter_mut().zip(xv.row(b * n + j)) {
                            *o += w * v;
                        }
                    }
                }
            }
        }
        Ok(self.record(value, Op::BlockMatMul(a, x), &[a, x]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        Ok(self.record(value, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let vb = self.value(b);
        let mut value = self.value(a).clone();
        for (x, y) in value.data_mut().iter_mut().zip(vb.data()) {
            *x -= y;
        }
        Ok(self.record(value, Op::Sub(a, b), &[a, b]))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let vb = self.value(b);
        let mut value = self.value(a).clone();
        for (x, y) in value.data_mut().iter_mut().zip(vb.data()) {
            *x *= y;
        }
        Ok(self.record(value, Op::Mul(a, b), &[a, b]))
    }

    /// Adds the `1×n` row `bias` to every row of the `m×n` input.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(bias));
        if sb != (1, sx.1) {
            return Err(Error::shape(
                "add_row",
                format!("{} + bias {}", shape_str(sx), shape_str(sb)),
            ));
        }
        let mut value = self.value(x).clone();
        let b = self.value(bias).data().to_vec();
        for r in 0..sx.0 {
            for (v, bv) in value.row_mut(r).iter_mut().zip(&b) {
                *v += bv;
            }
        }
        Ok(self.record(value, Op::AddRow(x, bias), &[x, bias]))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        self.record(value, Op::Relu(x), &[x])
    }

    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let (r0, c0) = self.shape(first);
        let value = match axis {
            Axis::Cols => {
                let mut cols = 0;
                for &p in parts {
                    let (r, c) = self.shape(p);
                    if r != r0 {
                        return Err(self.concat_error(parts));
                    }
                    cols += c;
                }
                let mut out = Matrix::zeros(r0, cols);
                for row in 0..r0 {
                    let mut offset = 0;
                    for &p in parts {
                        let src = self.value(p).row(row);
                        out.row_mut(row)[offset..offset + src.len()].copy_from_slice(src);
                        offset += src.len();
                    }
                }
                out
            }
            Axis::Rows => {
                let mut rows = 0;
                let mut data = Vec::new();
                for &p in parts {
                    let (r, c) = self.shape(p);
                    if c != c0 {
                        return Err(self.concat_error(parts));
                    }
                    rows += r;
                    data.extend_from_slice(self.value(p).data());
                }
                Matrix::from_vec(rows, c0, data)?
            }
        };
        Ok(self.record(value, Op::Concat(parts.to_vec(), axis), parts))
    }

    fn concat_error(&self, parts: &[Var]) -> Error {
        let shapes: Vec<String> = parts.iter().map(|&p| shape_str(self.shape(p))).collect();
        Error::shape("concat", shapes.join(", "))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let value = softmax_rows(self.value(x))?;
        Ok(self.record(value, Op::Softmax(x), &[x]))
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let value = log_softmax_rows(self.value(x))?;
        Ok(self.record(value, Op::LogSoftmax(x), &[x]))
    }

    /// Sum of all entries as a `1×1` value.
    pub fn sum(&mut self, x: Var) -> Var {
        let value = Matrix::scalar(self.value(x).sum());
        self.record(value, Op::Sum(x), &[x])
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let value = self.value(x).map(|v| v * k);
        self.record(value, Op::Scale(x, k), &[x])
    }

    pub fn square(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v * v);
        self.record(value, Op::Square(x), &[x])
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let value = self.value(x).reshaped(rows, cols)?;
        Ok(self.record(value, Op::Reshape(x), &[x]))
    }

    /// Picks entry `(i, cols[i])` of each row; output is `m×1`.
    pub fn gather(&mut self, x: Var, cols: &[usize]) -> Result<Var> {
        let (r, c) = self.shape(x);
        if cols.len() != r || cols.iter().any(|&j| j >= c) {
            return Err(Error::shape(
                "gather",
                format!("{} indices into {}", cols.len(), shape_str((r, c))),
            ));
        }
        let xv = self.value(x);
        let data = cols.iter().enumerate().map(|(i, &j)| xv.get(i, j)).collect();
        let value = Matrix::column_vector(data);
        Ok(self.record(value, Op::Gather(x, cols.to_vec()), &[x]))
    }

    /// Accumulates `∂loss/∂v` into the gradient of every node `v` that
    /// requires a gradient. Calling twice without [`Tape::zero_grads`]
    /// doubles the stored gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got {}",
                shape_str(self.shape(loss))
            )));
        }
        let mut adj: Vec<Option<Matrix>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(Matrix::scalar(1.0));

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = adj[i].take() else { continue };
            self.propagate(i, &g, &mut adj);
            let node = &mut self.nodes[i];
            match &mut node.grad {
                Some(acc) => acc.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Matrix, adj: &mut [Option<Matrix>]) {
        let node = &self.nodes[i];
        let val = |v: Var| -> &Matrix { &self.nodes[v.0].value };
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if wants(*a) {
                    matmul_nt_acc(g, val(*b), slot(adj, *a, val(*a)));
                }
                if wants(*b) {
                    matmul_tn_acc(val(*a), g, slot(adj, *b, val(*b)));
                }
            }
            Op::BlockMatMul(a, x) => {
                let (av, xv) = (val(*a), val(*x));
                let n = av.rows();
                let c = xv.cols();
                if wants(*x) {
                    let s = slot(adj, *x, xv);
                    for b in 0..xv.rows() / n {
                        for i in 0..n {
                            let gi = g.row(b * n + i);
                            for j in 0..n {
                                let w = av.get(i, j);
                                if w != 0.0 {
                                    let dst = &mut s.data_mut()[(b * n + j) * c..(b * n + j + 1) * c];
                                    for (d, gv) in dst.iter_mut().zip(gi) {
                                        *d += w * gv;
                                    }
                                }
                            }
                        }
                    }
                }
                if wants(*a) {
                    let s = slot(adj, *a, av);
                    for b in 0..xv.rows() / n {
                        for i in 0..n {
                            let gi = g.row(b * n + i);
                            for j in 0..n {
                                let dot: f64 = gi.iter().zip(xv.row(b * n + j)).map(|(p, q)| p * q).sum();
                                let cur = s.get(i, j);
                                s.set(i, j, cur + dot);
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for p in [*a, *b] {
                    if wants(p) {
                        slot(adj, p, val(p)).add_assign(g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if wants(*a) {
                    slot(adj, *a, val(*a)).add_assign(g);
                }
                if wants(*b) {
                    axpy(slot(adj, *b, val(*b)), -1.0, g);
                }
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    let s = slot(adj, *a, val(*a));
                    zip3(s, g, val(*b), |acc, gv, bv| *acc += gv * bv);
                }
                if wants(*b) {
                    let s = slot(adj, *b, val(*b));
                    zip3(s, g, val(*a), |acc, gv, av| *acc += gv * av);
                }
            }
            Op::AddRow(x, bias) => {
                if wants(*x) {
                    slot(adj, *x, val(*x)).add_assign(g);
                }
                if wants(*bias) {
                    let s = slot(adj, *bias, val(*bias));
                    for r in 0..g.rows() {
                        for (acc, gv) in s.data_mut().iter_mut().zip(g.row(r)) {
                            *acc += gv;
                        }
                    }
                }
            }
            Op::Relu(x) => {
                if wants(*x) {
                    let s = slot(adj, *x, val(*x));
                    zip3(s, g, val(*x), |acc, gv, xv| {
                        if xv > 0.0 {
                            *acc += gv
                        }
                    });
                }
            }
            Op::Concat(parts, axis) => {
                let mut offset = 0;
                for &p in parts {
                    let (pr, pc) = val(p).shape();
                    if wants(p) {
                        let s = slot(adj, p, val(p));
                        match axis {
                            Axis::Cols => {
                                for r in 0..pr {
                                    let src = &g.row(r)[offset..offset + pc];
                                    for (acc, gv) in s.row_mut(r).iter_mut().zip(src) {
                                        *acc += gv;
                                    }
                                }
                            }
                            Axis::Rows => {
                                let src = &g.data()[offset * pc..(offset + pr) * pc];
                                for (acc, gv) in s.data_mut().iter_mut().zip(src) {
                                    *acc += gv;
                                }
                            }
                        }
                    }
                    offset += match axis {
                        Axis::Cols => pc,
                        Axis::Rows => pr,
                    };
                }
            }
            Op::Softmax(x) => {
                if wants(*x) {
                    let y = &node.value;
                    let s = slot(adj, *x, val(*x));
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for ((acc, yv), gv) in s.row_mut(r).iter_mut().zip(yr).zip(gr) {
                            *acc += yv * (gv - dot);
                        }
                    }
                }
            }
            Op::LogSoftmax(x) => {
                if wants(*x) {
                    let y = &node.value;
                    let s = slot(adj, *x, val(*x));
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let total: f64 = gr.iter().sum();
                        for ((acc, yv), gv) in s.row_mut(r).iter_mut().zip(yr).zip(gr) {
                            *acc += gv - yv.exp() * total;
                        }
                    }
                }
            }
            Op::Sum(x) => {
                if wants(*x) {
                    let gv = g.item();
                    slot(adj, *x, val(*x))
                        .data_mut()
                        .iter_mut()
                        .for_each(|acc| *acc += gv);
                }
            }
            Op::Scale(x, k) => {
                if wants(*x) {
                    axpy(slot(adj, *x, val(*x)), *k, g);
                }
            }
            Op::Square(x) => {
                if wants(*x) {
                    let s = slot(adj, *x, val(*x));
                    zip3(s, g, val(*x), |acc, gv, xv| *acc += 2.0 * xv * gv);
                }
            }
            Op::Reshape(x) => {
                if wants(*x) {
                    let s = slot(adj, *x, val(*x));
                    for (acc, gv) in s.data_mut().iter_mut().zip(g.data()) {
                        *acc += gv;
                    }
                }
            }
            Op::Gather(x, cols) => {
                if wants(*x) {
                    let s = slot(adj, *x, val(*x));
                    for (r, &c) in cols.iter().enumerate() {
                        let cur = s.get(r, c);
                        s.set(r, c, cur + g.get(r, 0));
                    }
                }
            }
        }
    }
}

fn slot<'a>(adj: &'a mut [Option<Matrix>], v: Var, like: &Matrix) -> &'a mut Matrix {
    adj[v.0].get_or_insert_with(|| Matrix::zeros(like.rows(), like.cols()))
}

fn axpy(acc: &mut Matrix, k: f64, g: &Matrix) {
    for (a, gv) in acc.data_mut().iter_mut().zip(g.data()) {
        *a += k * gv;
    }
}

fn zip3(acc: &mut Matrix, g: &Matrix, other: &Matrix, f: impl Fn(&mut f64, f64, f64)) {
    for ((a, &gv), &ov) in acc.data_mut().iter_mut().zip(g.data()).zip(other.data()) {
        f(a, gv, ov);
    }
}

pub(crate) fn softmax_rows(x: &Matrix) -> Result<Matrix> {
    if !x.all_finite() {
        return Err(Error::Numeric("softmax"));
    }
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    Ok(out)
}

pub(crate) fn log_softmax_rows(x: &Matrix) -> Result<Matrix> {
    if !x.all_finite() {
        return Err(Error::Numeric("log_softmax"));
    }
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.iter_mut().for_each(|v| *v -= lse);
    }
    Ok(out)
}

/// Softmax of a plain slice, outside any tape.
pub fn softmax(values: &[f64]) -> Result<Vec<f64>> {
    Ok(softmax_rows(&Matrix::row_vector(values.to_vec()))?.into_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn matmul_hand_values() {
        let mut t = Tape::new();
        let a = t.leaf(Matrix::from_rows(&[[1.0, 2.0]]));
        let b = t.constant(Matrix::from_rows(&[[3.0], [4.0]]));
        let c = t.matmul(a, b).unwrap();
        assert_eq!(t.value(c).item(), 11.0);
        let s = t.sum(c);
        t.backward(s).unwrap();
        assert_eq!(t.grad(a).data(), &[3.0, 4.0]);
    }

    #[test]
    fn matmul_shape_error() {
        let mut t = Tape::new();
        let a = t.leaf(Matrix::zeros(1, 2));
        let b = t.leaf(Matrix::zeros(3, 1));
        let err = t.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[1x2]") && err.contains("[3x1]"), "{err}");
    }

    #[test]
    fn relu_values_and_subgradient() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::row_vector(vec![-1.0, 0.0, 2.0]));
        let y = t.relu(x);
        assert_eq!(t.value(y).data(), &[0.0, 0.0, 2.0]);
        let s = t.sum(y);
        t.backward(s).unwrap();
        assert_eq!(t.grad(x).data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn concat_values_and_split_gradient() {
        let mut t = Tape::new();
        let a = t.leaf(Matrix::row_vector(vec![1.0, 2.0]));
        let b = t.leaf(Matrix::row_vector(vec![3.0]));
        let c = t.concat(&[a, b], Axis::Cols).unwrap();
        assert_eq!(t.value(c).data(), &[1.0, 2.0, 3.0]);
        let s = t.sum(c);
        t.backward(s).unwrap();
        assert_eq!(t.grad(a).data(), &[1.0, 1.0]);
        assert_eq!(t.grad(b).data(), &[1.0]);

        let frames: Vec<Var> = (0..4).map(|_| t.constant(Matrix::zeros(1, 8))).collect();
        let stacked = t.concat(&frames, Axis::Cols).unwrap();
        assert_eq!(t.value(stacked).shape(), (1, 32));
    }

    #[test]
    fn concat_rejects_incompatible_shapes() {
        let mut t = Tape::new();
        let a = t.leaf(Matrix::zeros(2, 2));
        let b = t.leaf(Matrix::zeros(3, 1));
        assert!(matches!(t.concat(&[a, b], Axis::Cols), Err(Error::Shape { .. })));
        assert!(matches!(t.concat(&[a, b], Axis::Rows), Err(Error::Shape { .. })));
    }

    #[test]
    fn softmax_cases() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(softmax(&[1000.0, 1000.0]).unwrap(), vec![0.5, 0.5]);
        let p = softmax(&[0.0, 3f64.ln()]).unwrap();
        assert!(close(p[0], 0.25, 1e-15) && close(p[1], 0.75, 1e-15));
        assert!(matches!(softmax(&[f64::NAN, 0.0]), Err(Error::Numeric(_))));
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::zeros(1, 2));
        assert!(matches!(t.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn constant_loss_gives_zero_grads() {
        let mut t = Tape::new();
        let w = t.leaf(Matrix::row_vector(vec![1.0, 2.0]));
        let zero = t.scale(w, 0.0);
        let s = t.sum(zero);
        t.backward(s).unwrap();
        assert_eq!(t.grad(w).data(), &[0.0, 0.0]);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut t = Tape::new();
        let w = t.leaf(Matrix::from_rows(&[[0.5, -1.0], [2.0, 0.3]]));
        let x = t.constant(Matrix::from_rows(&[[1.0], [-0.7]]));
        let y = t.matmul(w, x).unwrap();
        let y = t.relu(y);
        let s = t.sum(y);
        t.backward(s).unwrap();
        let once = t.grad(w);
        t.backward(s).unwrap();
        let twice = t.grad(w);
        for (a, b) in once.data().iter().zip(twice.data()) {
            assert_eq!(2.0 * a, *b);
        }
        t.zero_grads();
        assert_eq!(t.grad(w).sum(), 0.0);
    }

    #[test]
    fn gather_picks_per_row() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]));
        let g = t.gather(x, &[1, 0]).unwrap();
        assert_eq!(t.value(g).data(), &[2.0, 3.0]);
        let s = t.sum(g);
        t.backward(s).unwrap();
        assert_eq!(t.grad(x).data(), &[0.0, 1.0, 1.0, 0.0]);
        assert!(t.gather(x, &[2, 0]).is_err());
    }

    #[test]
    fn truncate_drops_later_nodes() {
        let mut t = Tape::new();
        let w = t.leaf(Matrix::scalar(2.0));
        let mark = t.len();
        let y = t.square(w);
        t.backward(y).unwrap();
        t.truncate(mark);
        assert_eq!(t.len(), 1);
        assert_eq!(t.grad(w).item(), 4.0);
    }

    #[test]
    fn block_matmul_matches_kronecker_product() {
        let a = Matrix::from_rows(&[[0.5, 0.25], [-1.0, 2.0]]);
        let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0], [7.0, 8.0]]);
        let mut kron = Matrix::zeros(4, 4);
        for b in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    kron.set(2 * b + i, 2 * b + j, a.get(i, j));
                }
            }
        }
        let mut t = Tape::new();
        let (av, xv) = (t.leaf(a.clone()), t.leaf(x.clone()));
        let y = t.block_matmul(av, xv).unwrap();
        assert!(t.value(y).max_abs_diff(&kron.matmul(&x).unwrap()) < 1e-15);
        assert!(t.block_matmul(xv, av).is_err());
    }
}
