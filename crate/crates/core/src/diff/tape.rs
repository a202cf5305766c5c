//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! Every operation appends a node holding its forward value. `backward`
//! walks the tape in reverse and returns the gradient of a scalar output
//! with respect to every node that depends on a trainable leaf.

use super::matrix::{matmul_acc, matmul_nt_acc, matmul_tn_acc, Matrix};
use super::DiffError;
use std::sync::Arc;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Arc<Vec<usize>>),
    ScatterWeighted {
        x: Var,
        dst: Arc<Vec<usize>>,
        weights: Arc<Vec<f64>>,
    },
    WeightedSum(Vec<(Var, f64)>),
    MeanRows(Var, Arc<Vec<Vec<usize>>>),
    Mse(Var, Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Matrix,
    },
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Records a computation for reverse-mode differentiation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Matrix> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }
}

fn shape_err(op: &'static str, a: (usize, usize), b: (usize, usize)) -> DiffError {
    DiffError::ShapeMismatch { op, left: a, right: b }
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

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Leaf that receives gradients.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives gradients.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Copy of `v` cut off from gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(shape_err("matmul", sa, sb));
        }
        let value = self.value(a).matmul(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    /// `x · w + b` with `b` broadcast over rows.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, DiffError> {
        let (sx, sw, sb) = (self.shape(x), self.shape(w), self.shape(b));
        if sx.1 != sw.0 {
            return Err(shape_err("linear", sx, sw));
        }
        if sb != (1, sw.1) {
            return Err(shape_err("linear bias", sb, (1, sw.1)));
        }
        let mut value = Matrix::zeros(sx.0, sw.1);
        let bias = &self.nodes[b.0].value.data;
        for r in 0..sx.0 {
            value.row_mut(r).copy_from_slice(bias);
        }
        matmul_acc(self.value(x), self.value(w), &mut value);
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(value, Op::Linear { x, w, b }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err("add", sa, sb));
        }
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err("sub", sa, sb));
        }
        let mut value = self.value(a).clone();
        value.add_scaled(self.value(b), -1.0);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scaled(s);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, s), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let value = Matrix::from_vec(src.rows, src.cols, src.data.iter().map(|&x| x.max(0.0)).collect());
        let rg = self.rg(a);
        self.push(value, Op::Relu(a), rg)
    }

    /// Column-wise concatenation of equally tall matrices.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, DiffError> {
        let Some(&first) = parts.first() else {
            return Err(shape_err("concat", (0, 0), (0, 0)));
        };
        let rows = self.shape(first).0;
        let mut cols = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.0 != rows {
                return Err(shape_err("concat", (rows, cols), s));
            }
            cols += s.1;
        }
        let mut value = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for &p in parts {
                let src = self.value(p);
                value.data[r * cols + offset..r * cols + offset + src.cols].copy_from_slice(src.row(r));
                offset += src.cols;
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Rows of `x` picked by `idx` (repeats allowed).
    pub fn gather_rows(&mut self, x: Var, idx: Arc<Vec<usize>>) -> Result<Var, DiffError> {
        let src = self.value(x);
        if let Some(&bad) = idx.iter().find(|&&i| i >= src.rows) {
            return Err(shape_err("gather_rows", src.shape(), (bad, 0)));
        }
        let mut value = Matrix::zeros(idx.len(), src.cols);
        for (r, &i) in idx.iter().enumerate() {
            value.row_mut(r).copy_from_slice(src.row(i));
        }
        let rg = self.rg(x);
        Ok(self.push(value, Op::GatherRows(x, idx), rg))
    }

    /// `out[dst[e]] += weights[e] · x[e]` into an `n`-row result, summing
    /// in the order the rows of `x` are given.
    pub fn scatter_weighted(
        &mut self,
        x: Var,
        dst: Arc<Vec<usize>>,
        weights: Arc<Vec<f64>>,
        n: usize,
    ) -> Result<Var, DiffError> {
        let src = self.value(x);
        if dst.len() != src.rows || weights.len() != src.rows {
            return Err(shape_err("scatter_weighted", src.shape(), (dst.len(), weights.len())));
        }
        if let Some(&bad) = dst.iter().find(|&&d| d >= n) {
            return Err(shape_err("scatter_weighted", (n, 0), (bad, 0)));
        }
        let mut value = Matrix::zeros(n, src.cols);
        for (e, (&d, &w)) in dst.iter().zip(weights.iter()).enumerate() {
            for (o, &v) in value.row_mut(d).iter_mut().zip(src.row(e)) {
                *o += w * v;
            }
        }
        let rg = self.rg(x);
        Ok(self.push(value, Op::ScatterWeighted { x, dst, weights }, rg))
    }

    /// `Σ wᵢ·xᵢ` over equally shaped inputs.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var, DiffError> {
        let Some(&(first, _)) = terms.first() else {
            return Err(shape_err("weighted_sum", (0, 0), (0, 0)));
        };
        let shape = self.shape(first);
        let mut value = Matrix::zeros(shape.0, shape.1);
        for &(v, w) in terms {
            if self.shape(v) != shape {
                return Err(shape_err("weighted_sum", shape, self.shape(v)));
            }
            value.add_scaled(self.value(v), w);
        }
        let rg = terms.iter().any(|&(v, _)| self.rg(v));
        Ok(self.push(value, Op::WeightedSum(terms.to_vec()), rg))
    }

    /// One output row per group: the mean of the selected rows of `x`.
    pub fn mean_rows(&mut self, x: Var, groups: Arc<Vec<Vec<usize>>>) -> Result<Var, DiffError> {
        let src = self.value(x);
        let mut value = Matrix::zeros(groups.len(), src.cols);
        for (g, rows) in groups.iter().enumerate() {
            if rows.is_empty() {
                return Err(DiffError::EmptyGroup(g));
            }
            if let Some(&bad) = rows.iter().find(|&&r| r >= src.rows) {
                return Err(shape_err("mean_rows", src.shape(), (bad, 0)));
            }
            let inv = 1.0 / rows.len() as f64;
            let out = &mut value.data[g * src.cols..(g + 1) * src.cols];
            for &r in rows {
                for (o, &v) in out.iter_mut().zip(src.row(r)) {
                    *o += v;
                }
            }
            for o in out.iter_mut() {
                *o *= inv;
            }
        }
        let rg = self.rg(x);
        Ok(self.push(value, Op::MeanRows(x, groups), rg))
    }

    /// Mean over all rows of `x`, as a single row.
    pub fn mean_all_rows(&mut self, x: Var) -> Result<Var, DiffError> {
        let n = self.shape(x).0;
        self.mean_rows(x, Arc::new(vec![(0..n).collect()]))
    }

    /// Mean squared error over all elements; 1×1 output.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err("mse", sa, sb));
        }
        let (va, vb) = (self.value(a), self.value(b));
        let n = va.data.len().max(1) as f64;
        let total: f64 = va.data.iter().zip(&vb.data).map(|(x, y)| (x - y) * (x - y)).sum();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Matrix::scalar(total / n), Op::Mse(a, b), rg))
    }

    /// Mean softmax cross-entropy of `logits` rows against class indices.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var, DiffError> {
        let src = self.value(logits);
        if src.rows != targets.len() || src.rows == 0 {
            return Err(shape_err("cross_entropy", src.shape(), (targets.len(), 0)));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= src.cols) {
            return Err(shape_err("cross_entropy", src.shape(), (0, bad)));
        }
        let mut probs = Matrix::zeros(src.rows, src.cols);
        let mut total = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = src.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|x| (x - max).exp()).sum();
            let log_z = max + sum.ln();
            total += log_z - row[t];
            for (p, &x) in probs.row_mut(r).iter_mut().zip(row) {
                *p = (x - log_z).exp();
            }
        }
        let loss = Matrix::scalar(total / targets.len() as f64);
        let rg = self.rg(logits);
        Ok(self.push(
            loss,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Gradients of the scalar `output` with respect to every node.
    pub fn backward(&self, output: Var) -> Result<Gradients, DiffError> {
        let out = self.value(output);
        if out.data.len() != 1 {
            return Err(shape_err("backward", out.shape(), (1, 1)));
        }
        if !out.is_finite() {
            return Err(DiffError::NonFiniteValue("loss"));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Matrix::scalar(1.0));

        fn acc(grads: &mut [Option<Matrix>], nodes: &[Node], v: Var, f: impl FnOnce(&mut Matrix)) {
            if !nodes[v.0].requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| {
                let (r, c) = nodes[v.0].value.shape();
                Matrix::zeros(r, c)
            });
            f(slot);
        }

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let nodes = &self.nodes;
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    acc(&mut grads, nodes, *a, |ga| matmul_nt_acc(&g, &nodes[b.0].value, ga));
                    acc(&mut grads, nodes, *b, |gb| matmul_tn_acc(&nodes[a.0].value, &g, gb));
                }
                Op::Linear { x, w, b } => {
                    acc(&mut grads, nodes, *x, |gx| matmul_nt_acc(&g, &nodes[w.0].value, gx));
                    acc(&mut grads, nodes, *w, |gw| matmul_tn_acc(&nodes[x.0].value, &g, gw));
                    acc(&mut grads, nodes, *b, |gb| {
                        for r in 0..g.rows {
                            for (o, &v) in gb.data.iter_mut().zip(g.row(r)) {
                                *o += v;
                            }
                        }
                    });
                }
                Op::Add(a, b) => {
                    acc(&mut grads, nodes, *a, |ga| ga.add_assign(&g));
                    acc(&mut grads, nodes, *b, |gb| gb.add_assign(&g));
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, nodes, *a, |ga| ga.add_assign(&g));
                    acc(&mut grads, nodes, *b, |gb| gb.add_scaled(&g, -1.0));
                }
                Op::Scale(a, s) => acc(&mut grads, nodes, *a, |ga| ga.add_scaled(&g, *s)),
                Op::Relu(a) => {
                    let out = &node.value;
                    acc(&mut grads, nodes, *a, |ga| {
                        for ((o, &gv), &y) in ga.data.iter_mut().zip(&g.data).zip(&out.data) {
                            if y > 0.0 {
                                *o += gv;
                            }
                        }
                    });
                }
                Op::ConcatCols(parts) => {
                    let cols = g.cols;
                    let mut offset = 0;
                    for &p in parts {
                        let pc = nodes[p.0].value.cols;
                        acc(&mut grads, nodes, p, |gp| {
                            for r in 0..g.rows {
                                for (o, &v) in gp
                                    .row_mut(r)
                                    .iter_mut()
                                    .zip(&g.data[r * cols + offset..r * cols + offset + pc])
                                {
                                    *o += v;
                                }
                            }
                        });
                        offset += pc;
                    }
                }
                Op::GatherRows(x, idx) => acc(&mut grads, nodes, *x, |gx| {
                    for (r, &i) in idx.iter().enumerate() {
                        for (o, &v) in gx.row_mut(i).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                }),
                Op::ScatterWeighted { x, dst, weights } => acc(&mut grads, nodes, *x, |gx| {
                    for (e, (&d, &w)) in dst.iter().zip(weights.iter()).enumerate() {
                        for (o, &v) in gx.row_mut(e).iter_mut().zip(g.row(d)) {
                            *o += w * v;
                        }
                    }
                }),
                Op::WeightedSum(terms) => {
                    for &(v, w) in terms {
                        acc(&mut grads, nodes, v, |gv| gv.add_scaled(&g, w));
                    }
                }
                Op::MeanRows(x, groups) => acc(&mut grads, nodes, *x, |gx| {
                    for (gi, rows) in groups.iter().enumerate() {
                        let inv = 1.0 / rows.len() as f64;
                        for &r in rows {
                            for (o, &v) in gx.row_mut(r).iter_mut().zip(g.row(gi)) {
                                *o += v * inv;
                            }
                        }
                    }
                }),
                Op::Mse(a, b) => {
                    let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                    let scale = 2.0 * g.item() / va.data.len().max(1) as f64;
                    acc(&mut grads, nodes, *a, |ga| {
                        for ((o, x), y) in ga.data.iter_mut().zip(&va.data).zip(&vb.data) {
                            *o += scale * (x - y);
                        }
                    });
                    acc(&mut grads, nodes, *b, |gb| {
                        for ((o, x), y) in gb.data.iter_mut().zip(&va.data).zip(&vb.data) {
                            *o -= scale * (x - y);
                        }
                    });
                }
                Op::CrossEntropy { logits, targets, probs } => {
                    let scale = g.item() / targets.len() as f64;
                    acc(&mut grads, nodes, *logits, |gl| {
                        for (r, &t) in targets.iter().enumerate() {
                            for (c, o) in gl.row_mut(r).iter_mut().enumerate() {
                                let indicator = if c == t { 1.0 } else { 0.0 };
                                *o += scale * (probs.get(r, c) - indicator);
                            }
                        }
                    });
                }
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }
}
