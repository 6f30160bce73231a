//! Tensor-level reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every primitive applied during a forward pass as a
//! node holding its operands, its value and enough information to run the
//! local vector-Jacobian product. [`Graph::backward`] sweeps the nodes in
//! reverse insertion order, which is a valid reverse topological order because
//! operands always exist before the node that consumes them.

use std::fmt;

use super::{kernels, sigmoid, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A differentiable operation defined outside this module.
///
/// `backward` returns one gradient per input, each shaped like that input.
pub trait CustomOp {
    fn name(&self) -> &'static str;
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor>;
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Tensor>;
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    BroadcastRows(Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Square(Var),
    SafeSqrt(Var, f64),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    Sum(Var),
    SoftmaxXent(Var, Vec<usize>),
    Custom(Box<dyn CustomOp>, Vec<Var>),
}

impl fmt::Debug for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::BroadcastRows(..) => "broadcast_rows",
            Op::Scale(..) => "scale",
            Op::Sigmoid(..) => "sigmoid",
            Op::Tanh(..) => "tanh",
            Op::Exp(..) => "exp",
            Op::Square(..) => "square",
            Op::SafeSqrt(..) => "safe_sqrt",
            Op::ConcatCols(..) => "concat_cols",
            Op::SliceCols(..) => "slice_cols",
            Op::ConcatRows(..) => "concat_rows",
            Op::GatherRows(..) => "gather_rows",
            Op::Sum(..) => "sum",
            Op::SoftmaxXent(..) => "softmax_xent",
            Op::Custom(op, _) => op.name(),
        };
        f.write_str(name)
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recorded forward computation. One graph per minibatch.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf; receives a gradient in [`Graph::backward`].
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn op_name(&self, v: Var) -> String {
        format!("{:?}", self.nodes[v.0].op)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(a).map(f);
        let rg = self.rg(&[a]);
        self.push(value, op, rg)
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), f)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, op, rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.cols() != tb.rows() {
            return Err(Error::Shape(format!(
                "matmul {:?} x {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = vec![0.0; m * n];
        kernels::gemm_acc(ta.data(), tb.data(), &mut out, m, k, n);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// `a[r×c] + row[c]` with the row broadcast over all rows of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tr) = (self.value(a), self.value(row));
        let c = ta.cols();
        if ta.shape().len() != 2 || tr.len() != c {
            return Err(Error::Shape(format!(
                "add_row {:?} + {:?}",
                ta.shape(),
                tr.shape()
            )));
        }
        let mut out = ta.data().to_vec();
        for chunk in out.chunks_mut(c) {
            for (o, &r) in chunk.iter_mut().zip(tr.data()) {
                *o += r;
            }
        }
        let value = Tensor::from_parts(ta.shape().to_vec(), out);
        let rg = self.rg(&[a, row]);
        Ok(self.push(value, Op::AddRow(a, row), rg))
    }

    /// Stack `rows` copies of a vector into a matrix.
    pub fn broadcast_rows(&mut self, v: Var, rows: usize) -> Result<Var> {
        if rows == 0 {
            return Err(Error::Shape("broadcast to zero rows".into()));
        }
        let tv = self.value(v);
        let c = tv.len();
        let data = tv.data().repeat(rows);
        let rg = self.rg(&[v]);
        Ok(self.push(
            Tensor::from_parts(vec![rows, c], data),
            Op::BroadcastRows(v),
            rg,
        ))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, Op::Scale(a, s), |x| x * s)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    /// `sqrt(v)` for `v >= floor`; below the floor it continues linearly as
    /// `v / sqrt(floor)`, so the value is exactly 0 at `v = 0` and the
    /// derivative stays bounded by `1 / sqrt(floor)`.
    pub fn safe_sqrt(&mut self, a: Var, floor: f64) -> Var {
        self.unary(a, Op::SafeSqrt(a, floor), move |v| v / v.max(floor).sqrt())
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        let rows = self.value(*first).rows();
        let mut total = 0;
        for p in parts {
            let t = self.value(*p);
            if t.shape().len() != 2 || t.rows() != rows {
                return Err(Error::Shape(format!(
                    "concat_cols expects {rows} rows, got {:?}",
                    t.shape()
                )));
            }
            total += t.cols();
        }
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                out.extend_from_slice(self.value(*p).row(r));
            }
        }
        let rg = self.rg(parts);
        Ok(self.push(
            Tensor::from_parts(vec![rows, total], out),
            Op::ConcatCols(parts.to_vec()),
            rg,
        ))
    }

    /// Columns `[start, start + len)` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(a);
        if t.shape().len() != 2 || len == 0 || start + len > t.cols() {
            return Err(Error::Shape(format!(
                "slice_cols [{start}, {}) of {:?}",
                start + len,
                t.shape()
            )));
        }
        let rows = t.rows();
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&t.row(r)[start..start + len]);
        }
        let rg = self.rg(&[a]);
        Ok(self.push(
            Tensor::from_parts(vec![rows, len], out),
            Op::SliceCols(a, start),
            rg,
        ))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("concat of nothing".into()))?;
        let cols = self.value(*first).cols();
        let mut rows = 0;
        let mut out = Vec::new();
        for p in parts {
            let t = self.value(*p);
            if t.shape().len() != 2 || t.cols() != cols {
                return Err(Error::Shape(format!(
                    "concat_rows expects {cols} cols, got {:?}",
                    t.shape()
                )));
            }
            rows += t.rows();
            out.extend_from_slice(t.data());
        }
        let rg = self.rg(parts);
        Ok(self.push(
            Tensor::from_parts(vec![rows, cols], out),
            Op::ConcatRows(parts.to_vec()),
            rg,
        ))
    }

    /// Rows of `table` selected by `idx` (embedding lookup, or a one-hot
    /// input multiplied by a weight matrix).
    pub fn gather_rows(&mut self, table: Var, idx: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (rows, cols) = (t.rows(), t.cols());
        if idx.is_empty() {
            return Err(Error::Shape("gather of no rows".into()));
        }
        let mut out = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            if i >= rows {
                return Err(Error::Shape(format!("row {i} out of range {rows}")));
            }
            out.extend_from_slice(t.row(i));
        }
        let rg = self.rg(&[table]);
        Ok(self.push(
            Tensor::from_parts(vec![idx.len(), cols], out),
            Op::GatherRows(table, idx.to_vec()),
            rg,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    /// Summed softmax cross-entropy, `-Σ_r log softmax(logits_r)[targets_r]`.
    pub fn softmax_xent(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        let (rows, cols) = (t.rows(), t.cols());
        if targets.len() != rows {
            return Err(Error::Shape(format!(
                "{} targets for {rows} rows of logits",
                targets.len()
            )));
        }
        let mut total = 0.0;
        for (r, &y) in targets.iter().enumerate() {
            if y >= cols {
                return Err(Error::Shape(format!("target {y} out of range {cols}")));
            }
            let row = t.row(r);
            total += log_sum_exp(row) - row[y];
        }
        let rg = self.rg(&[logits]);
        Ok(self.push(
            Tensor::scalar(total),
            Op::SoftmaxXent(logits, targets.to_vec()),
            rg,
        ))
    }

    pub fn custom(&mut self, op: Box<dyn CustomOp>, inputs: &[Var]) -> Result<Var> {
        let value = {
            let ins: Vec<&Tensor> = inputs.iter().map(|v| self.value(*v)).collect();
            op.forward(&ins)?
        };
        let rg = self.rg(inputs);
        Ok(self.push(value, Op::Custom(op, inputs.to_vec()), rg))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::from_parts(lt.shape().to_vec(), vec![1.0]));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    /// Like `accumulate` but lets the caller write directly into the slot.
    fn accumulate_with(
        &self,
        grads: &mut [Option<Tensor>],
        v: Var,
        f: impl FnOnce(&mut [f64]),
    ) {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| Tensor::zeros(node.value.shape()));
        f(slot.data_mut());
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let out = &node.value;
        let elementwise = |a: Var, f: &dyn Fn(f64, f64, f64) -> f64| -> Tensor {
            let x = self.value(a);
            let data = x
                .data()
                .iter()
                .zip(out.data())
                .zip(g.data())
                .map(|((&x, &y), &g)| f(x, y, g))
                .collect();
            Tensor::from_parts(x.shape().to_vec(), data)
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                self.accumulate_with(grads, *a, |acc| {
                    kernels::gemm_nt_acc(g.data(), tb.data(), acc, m, k, n)
                });
                self.accumulate_with(grads, *b, |acc| {
                    kernels::gemm_tn_acc(ta.data(), g.data(), acc, m, k, n)
                });
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.nodes[a.0].requires_grad {
                    let ga = g.zip_map(tb, |g, y| g * y).expect("shape checked");
                    self.accumulate(grads, *a, ga);
                }
                if self.nodes[b.0].requires_grad {
                    let gb = g.zip_map(ta, |g, x| g * x).expect("shape checked");
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::AddRow(a, row) => {
                self.accumulate(grads, *a, g.clone());
                let c = g.cols();
                self.accumulate_with(grads, *row, |acc| {
                    for chunk in g.data().chunks(c) {
                        for (o, &x) in acc.iter_mut().zip(chunk) {
                            *o += x;
                        }
                    }
                });
            }
            Op::BroadcastRows(v) => {
                let c = g.cols();
                self.accumulate_with(grads, *v, |acc| {
                    for chunk in g.data().chunks(c) {
                        for (o, &x) in acc.iter_mut().zip(chunk) {
                            *o += x;
                        }
                    }
                });
            }
            Op::Scale(a, s) => {
                let s = *s;
                self.accumulate(grads, *a, g.map(|x| x * s));
            }
            Op::Sigmoid(a) => {
                let ga = elementwise(*a, &|_, y, g| g * y * (1.0 - y));
                self.accumulate(grads, *a, ga);
            }
            Op::Tanh(a) => {
                let ga = elementwise(*a, &|_, y, g| g * (1.0 - y * y));
                self.accumulate(grads, *a, ga);
            }
            Op::Exp(a) => {
                let ga = elementwise(*a, &|_, y, g| g * y);
                self.accumulate(grads, *a, ga);
            }
            Op::Square(a) => {
                let ga = elementwise(*a, &|x, _, g| 2.0 * x * g);
                self.accumulate(grads, *a, ga);
            }
            Op::SafeSqrt(a, floor) => {
                let floor = *floor;
                let ga = elementwise(*a, &|x, y, g| {
                    if x >= floor {
                        g * 0.5 / y
                    } else {
                        g / floor.sqrt()
                    }
                });
                self.accumulate(grads, *a, ga);
            }
            Op::ConcatCols(parts) => {
                let total = g.cols();
                let mut offset = 0;
                for p in parts {
                    let w = self.value(*p).cols();
                    self.accumulate_with(grads, *p, |acc| {
                        for (r, dst) in acc.chunks_mut(w).enumerate() {
                            let src = &g.data()[r * total + offset..r * total + offset + w];
                            for (o, &x) in dst.iter_mut().zip(src) {
                                *o += x;
                            }
                        }
                    });
                    offset += w;
                }
            }
            Op::SliceCols(a, start) => {
                let start = *start;
                let total = self.value(*a).cols();
                let w = g.cols();
                self.accumulate_with(grads, *a, |acc| {
                    for (r, src) in g.data().chunks(w).enumerate() {
                        let dst = &mut acc[r * total + start..r * total + start + w];
                        for (o, &x) in dst.iter_mut().zip(src) {
                            *o += x;
                        }
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let n = self.value(*p).len();
                    self.accumulate_with(grads, *p, |acc| {
                        for (o, &x) in acc.iter_mut().zip(&g.data()[offset..offset + n]) {
                            *o += x;
                        }
                    });
                    offset += n;
                }
            }
            Op::GatherRows(table, idx) => {
                let c = g.cols();
                self.accumulate_with(grads, *table, |acc| {
                    for (r, &i) in idx.iter().enumerate() {
                        let dst = &mut acc[i * c..(i + 1) * c];
                        for (o, &x) in dst.iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                });
            }
            Op::Sum(a) => {
                let s = g.data()[0];
                let shape = self.value(*a).shape().to_vec();
                self.accumulate(grads, *a, Tensor::full(&shape, s));
            }
            Op::SoftmaxXent(logits, targets) => {
                let s = g.data()[0];
                let t = self.value(*logits);
                let c = t.cols();
                self.accumulate_with(grads, *logits, |acc| {
                    for (r, &y) in targets.iter().enumerate() {
                        let row = t.row(r);
                        let lse = log_sum_exp(row);
                        let dst = &mut acc[r * c..(r + 1) * c];
                        for (j, o) in dst.iter_mut().enumerate() {
                            let p = (row[j] - lse).exp();
                            *o += s * (p - if j == y { 1.0 } else { 0.0 });
                        }
                    }
                });
            }
            Op::Custom(op, inputs) => {
                let ins: Vec<&Tensor> = inputs.iter().map(|v| self.value(*v)).collect();
                let gs = op.backward(&ins, out, g);
                for (v, gv) in inputs.iter().zip(gs) {
                    self.accumulate(grads, *v, gv);
                }
            }
        }
    }
}

pub fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndmath::Rng;

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::new();
        let p = g.param(Tensor::from_rows(&[&[1.0, -2.0], &[3.0, 0.5]]).unwrap());
        let l = g.sum(p);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(p).unwrap(), &Tensor::full(&[2, 2], 1.0));
    }

    #[test]
    fn sum_of_squares_gradient_is_twice_input() {
        let mut g = Graph::new();
        let t = Tensor::vector(vec![1.0, -2.0, 3.5]).unwrap();
        let p = g.param(t.clone());
        let pp = g.mul(p, p).unwrap();
        let l = g.sum(pp);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(p).unwrap(), &t.map(|x| 2.0 * x));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let p = g.param(Tensor::zeros(&[2]));
        assert!(g.backward(p).is_err());
    }

    #[test]
    fn matmul_rejects_mismatch_with_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]"), "{err}");
    }

    #[test]
    fn matmul_hand_values() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap());
        let b = g.constant(Tensor::from_rows(&[&[0.0], &[1.0]]).unwrap());
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[2.0, 4.0]);

        let i = g.constant(Tensor::identity(2));
        let ia = g.matmul(i, a).unwrap();
        assert_eq!(g.value(ia), g.value(a));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = Rng::new(9);
        let a = rng.standard_normal(&[5, 7]).unwrap();
        let b = rng.standard_normal(&[7, 3]).unwrap();
        let mut want = Tensor::zeros(&[5, 3]);
        for i in 0..5 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..7 {
                    s += a.get(i, k) * b.get(k, j);
                }
                want.set(i, j, s);
            }
        }
        let mut g = Graph::new();
        let (va, vb) = (g.constant(a), g.constant(b));
        let c = g.matmul(va, vb).unwrap();
        assert!(g.value(c).max_abs_diff(&want) <= 1e-12);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::new();
        let c = g.constant(Tensor::full(&[2], 3.0));
        let p = g.param(Tensor::full(&[2], 2.0));
        let m = g.mul(c, p).unwrap();
        let l = g.sum(m);
        let grads = g.backward(l).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(p).unwrap().data(), &[3.0, 3.0]);
    }

    #[test]
    fn safe_sqrt_is_exact_zero_at_zero() {
        let mut g = Graph::new();
        let v = g.param(Tensor::vector(vec![0.0, 1e-30, 4.0]).unwrap());
        let s = g.safe_sqrt(v, 1e-16);
        assert_eq!(g.value(s).data()[0], 0.0);
        assert!(g.value(s).data()[1] < 1e-20);
        assert_eq!(g.value(s).data()[2], 2.0);
        let l = g.sum(s);
        let grads = g.backward(l).unwrap();
        let gv = grads.get(v).unwrap().data();
        assert!(gv.iter().all(|x| x.is_finite()));
        assert_eq!(gv[2], 0.25);
    }

    #[test]
    fn op_names_are_recorded() {
        let mut g = Graph::new();
        let a = g.param(Tensor::zeros(&[1]));
        let b = g.tanh(a);
        assert_eq!(g.op_name(b), "tanh");
        assert_eq!(g.op_name(a), "leaf");
    }
}
