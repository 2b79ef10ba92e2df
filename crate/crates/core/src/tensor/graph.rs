use std::rc::Rc;

use super::{gemm_into, ParameterStore, Scalar, Tensor};
use crate::error::{Error, Result};

/// Floor applied to probabilities before taking their logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Compressed sparse rows with an explicit column count.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows<T> {
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
    n_cols: usize,
}

impl<T: Scalar> SparseRows<T> {
    /// Builds from per-row `(column, weight)` lists; entry order is kept.
    pub fn from_rows(rows: Vec<Vec<(usize, T)>>, n_cols: usize) -> Result<Self> {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        offsets.push(0);
        for row in rows {
            for (c, v) in row {
                if c >= n_cols {
                    return Err(Error::Parameter(format!(
                        "sparse column {c} out of range {n_cols}"
                    )));
                }
                cols.push(c);
                vals.push(v);
            }
            offsets.push(cols.len());
        }
        Ok(SparseRows {
            offsets,
            cols,
            vals,
            n_cols,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.offsets[r]..self.offsets[r + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.vals[span].iter().copied())
    }

    /// `out[r] = Σ_c w_rc · x[c]` over rows of width `width`.
    fn apply(&self, x: &[T], width: usize, out: &mut [T]) {
        for r in 0..self.n_rows() {
            let dst = &mut out[r * width..(r + 1) * width];
            dst.iter_mut().for_each(|v| *v = T::zero());
            for (c, w) in self.row(r) {
                let src = &x[c * width..(c + 1) * width];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * *s;
                }
            }
        }
    }

    /// `out[c] += Σ_r w_rc · g[r]`, the transpose product.
    fn apply_transpose_acc(&self, g: &[T], width: usize, out: &mut [T]) {
        for r in 0..self.n_rows() {
            let src = &g[r * width..(r + 1) * width];
            for (c, w) in self.row(r) {
                let dst = &mut out[c * width..(c + 1) * width];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * *s;
                }
            }
        }
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Softmax {
        x: Var,
        tau: T,
    },
    CrossEntropy {
        target: Var,
        pred: Var,
        weights: Option<Vec<T>>,
    },
    SegmentMax {
        x: Var,
        argmax: Vec<usize>,
    },
    Propagate {
        adj: Rc<SparseRows<T>>,
        x: Var,
    },
    WeightedSum {
        x: Var,
        weights: Vec<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Per-node gradients produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

/// Define-by-run tape. Nodes are appended in evaluation order, so reverse
/// index order is a valid topological order for the backward sweep.
#[derive(Debug)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    params: Vec<(Var, String)>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn dim_err(op: &'static str, a: &[usize], b: &[usize]) -> Error {
    Error::Dimension {
        op,
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            params: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
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

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// A leaf that never receives gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t.detached(), Op::Leaf, false)
    }

    /// An anonymous leaf that receives gradient.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t.detached(), Op::Leaf, true)
    }

    /// A named trainable leaf; its gradient can be written back with
    /// [`Graph::accumulate_param_grads`].
    pub fn param(&mut self, name: &str, t: &Tensor<T>) -> Var {
        let v = self.push(t.detached(), Op::Leaf, true);
        self.params.push((v, name.to_string()));
        v
    }

    /// Loads a parameter from `store`.
    pub fn param_from(&mut self, store: &ParameterStore<T>, name: &str) -> Result<Var> {
        let t = store.get(name)?;
        Ok(self.param(name, t))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.cols() != tb.rows() {
            return Err(dim_err("matmul", ta.shape(), tb.shape()));
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = vec![T::zero(); m * n];
        gemm_into(m, k, n, ta.data(), false, tb.data(), false, false, &mut out);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::MatMul(a, b), rg))
    }

    /// Adds a length-`n` bias to every row of an `m×n` tensor.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let n = tx.cols();
        if tb.len() != n {
            return Err(dim_err("add_bias", tx.shape(), tb.shape()));
        }
        let mut out = tx.data().to_vec();
        for row in out.chunks_mut(n) {
            for (o, b) in row.iter_mut().zip(tb.data()) {
                *o += *b;
            }
        }
        let shape = tx.shape().to_vec();
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(Tensor::new(&shape, out)?, Op::AddBias(x, bias), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(dim_err("add", ta.shape(), tb.shape()));
        }
        let out = ta.data().iter().zip(tb.data()).map(|(x, y)| *x + *y).collect();
        let shape = ta.shape().to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(&shape, out)?, Op::Add(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let tx = self.value(x);
        let out = tx.data().iter().map(|v| *v * c).collect();
        let t = Tensor::new(tx.shape(), out).expect("same shape");
        let rg = self.rg(x);
        self.push(t, Op::Scale(x, c), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let out = tx
            .data()
            .iter()
            .map(|v| if *v > T::zero() { *v } else { T::zero() })
            .collect();
        let t = Tensor::new(tx.shape(), out).expect("same shape");
        let rg = self.rg(x);
        self.push(t, Op::Relu(x), rg)
    }

    /// Row-wise softmax of `x / tau` with max subtraction.
    pub fn row_softmax(&mut self, x: Var, tau: T) -> Result<Var> {
        if !(tau > T::zero()) {
            return Err(Error::Parameter(format!(
                "softmax temperature must be positive, got {tau}"
            )));
        }
        let t = softmax_rows(self.value(x), tau);
        let rg = self.rg(x);
        Ok(self.push(t, Op::Softmax { x, tau }, rg))
    }

    /// Mean over rows of `−Σ target · log(max(pred, 1e-12))`.
    ///
    /// `target` must be a constant node; gradient flows to `pred` only.
    pub fn cross_entropy(&mut self, target: Var, pred: Var) -> Result<Var> {
        self.cross_entropy_impl(target, pred, None)
    }

    /// Like [`Graph::cross_entropy`] with a per-row weight; the sum is still
    /// divided by the row count, so zero weights remove rows entirely.
    pub fn weighted_cross_entropy(&mut self, target: Var, pred: Var, weights: Vec<T>) -> Result<Var> {
        self.cross_entropy_impl(target, pred, Some(weights))
    }

    fn cross_entropy_impl(&mut self, target: Var, pred: Var, weights: Option<Vec<T>>) -> Result<Var> {
        if self.rg(target) {
            return Err(Error::State(
                "cross_entropy target must be a constant (stop-gradient) node".into(),
            ));
        }
        let (tt, tp) = (self.value(target), self.value(pred));
        if tt.shape() != tp.shape() {
            return Err(dim_err("cross_entropy", tt.shape(), tp.shape()));
        }
        if !tt.is_finite() || !tp.is_finite() {
            return Err(Error::Numeric("non-finite input to cross_entropy".into()));
        }
        let (m, d) = (tp.rows(), tp.cols());
        if let Some(w) = &weights {
            if w.len() != m {
                return Err(dim_err("cross_entropy weights", tp.shape(), &[w.len()]));
            }
        }
        let floor = T::lit(LOG_FLOOR);
        let mut total = T::zero();
        for r in 0..m {
            let mut row = T::zero();
            for c in 0..d {
                let t = tt.data()[r * d + c];
                if t != T::zero() {
                    row -= t * tp.data()[r * d + c].max(floor).ln();
                }
            }
            total += weights.as_ref().map_or(T::one(), |w| w[r]) * row;
        }
        let value = total / T::from_usize(m.max(1)).expect("usize");
        let rg = self.rg(pred);
        Ok(self.push(
            Tensor::scalar(value),
            Op::CrossEntropy {
                target,
                pred,
                weights,
            },
            rg,
        ))
    }

    /// Max over each consecutive block of `segment` rows; the output has one
    /// row per block. Gradient goes to the first arg-max row per column.
    pub fn segment_max(&mut self, x: Var, segment: usize) -> Result<Var> {
        let tx = self.value(x);
        let (n, d) = (tx.rows(), tx.cols());
        if segment == 0 || n == 0 || n % segment != 0 {
            return Err(dim_err("segment_max", tx.shape(), &[segment]));
        }
        let blocks = n / segment;
        let mut out = vec![T::zero(); blocks * d];
        let mut argmax = vec![0usize; blocks * d];
        for b in 0..blocks {
            for c in 0..d {
                let mut best_r = b * segment;
                let mut best = tx.data()[best_r * d + c];
                for r in b * segment + 1..(b + 1) * segment {
                    let v = tx.data()[r * d + c];
                    if v > best {
                        best = v;
                        best_r = r;
                    }
                }
                out[b * d + c] = best;
                argmax[b * d + c] = best_r;
            }
        }
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::new(&[blocks, d], out)?,
            Op::SegmentMax { x, argmax },
            rg,
        ))
    }

    /// Column-wise maximum over all rows, `n×d → 1×d`.
    pub fn column_max_pool(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).rows();
        if n == 0 || self.value(x).is_empty() {
            return Err(dim_err("column_max_pool", self.value(x).shape(), &[]));
        }
        self.segment_max(x, n)
    }

    /// Sparse left-multiplication `adj · x`.
    pub fn propagate(&mut self, adj: Rc<SparseRows<T>>, x: Var) -> Result<Var> {
        let tx = self.value(x);
        if tx.rows() != adj.n_cols() {
            return Err(dim_err("propagate", &[adj.n_rows(), adj.n_cols()], tx.shape()));
        }
        let w = tx.cols();
        let mut out = vec![T::zero(); adj.n_rows() * w];
        adj.apply(tx.data(), w, &mut out);
        let t = Tensor::new(&[adj.n_rows(), w], out)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Propagate { adj, x }, rg))
    }

    /// `Σ_i w_i · x_i` as a 1×1 tensor.
    pub fn weighted_sum(&mut self, x: Var, weights: Vec<T>) -> Result<Var> {
        let tx = self.value(x);
        if weights.len() != tx.len() {
            return Err(dim_err("weighted_sum", tx.shape(), &[weights.len()]));
        }
        let s = tx.data().iter().zip(&weights).map(|(a, b)| *a * *b).sum();
        let rg = self.rg(x);
        Ok(self.push(Tensor::scalar(s), Op::WeightedSum { x, weights }, rg))
    }

    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len();
        self.weighted_sum(x, vec![T::one(); n])
    }

    /// Reverse sweep from a 1×1 `loss` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(dim_err("backward", self.value(loss).shape(), &[1, 1]));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn grad_slot<'g>(&self, grads: &'g mut [Option<Vec<T>>], v: Var) -> Option<&'g mut Vec<T>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let len = self.nodes[v.0].value.len();
        Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); len]))
    }

    fn backprop_node(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if let Some(ga) = self.grad_slot(grads, *a) {
                    // dA = dC · Bᵀ
                    gemm_into(m, n, k, g, false, tb.data(), true, true, ga);
                }
                if let Some(gb) = self.grad_slot(grads, *b) {
                    // dB = Aᵀ · dC
                    gemm_into(k, m, n, ta.data(), true, g, false, true, gb);
                }
            }
            Op::AddBias(x, bias) => {
                let n = self.value(*bias).len();
                if let Some(gx) = self.grad_slot(grads, *x) {
                    add_assign(gx, g);
                }
                if let Some(gb) = self.grad_slot(grads, *bias) {
                    for row in g.chunks(n) {
                        add_assign(gb, row);
                    }
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = self.grad_slot(grads, *a) {
                    add_assign(ga, g);
                }
                if let Some(gb) = self.grad_slot(grads, *b) {
                    add_assign(gb, g);
                }
            }
            Op::Scale(x, c) => {
                if let Some(gx) = self.grad_slot(grads, *x) {
                    for (d, s) in gx.iter_mut().zip(g) {
                        *d += *c * *s;
                    }
                }
            }
            Op::Relu(x) => {
                let tx = self.value(*x);
                if let Some(gx) = self.grad_slot(grads, *x) {
                    for ((d, s), v) in gx.iter_mut().zip(g).zip(tx.data()) {
                        if *v > T::zero() {
                            *d += *s;
                        }
                    }
                }
            }
            Op::Softmax { x, tau } => {
                let y = &node.value;
                let d = y.cols();
                if let Some(gx) = self.grad_slot(grads, *x) {
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let gr = &g[r * d..(r + 1) * d];
                        let dot: T = yr.iter().zip(gr).map(|(a, b)| *a * *b).sum();
                        for c in 0..d {
                            gx[r * d + c] += yr[c] * (gr[c] - dot) / *tau;
                        }
                    }
                }
            }
            Op::CrossEntropy {
                target,
                pred,
                weights,
            } => {
                let (tt, tp) = (self.value(*target), self.value(*pred));
                let (m, d) = (tp.rows(), tp.cols());
                let floor = T::lit(LOG_FLOOR);
                let scale = g[0] / T::from_usize(m.max(1)).expect("usize");
                if let Some(gp) = self.grad_slot(grads, *pred) {
                    for r in 0..m {
                        let w = weights.as_ref().map_or(T::one(), |w| w[r]);
                        for c in 0..d {
                            let p = tp.data()[r * d + c];
                            let t = tt.data()[r * d + c];
                            if p > floor && t != T::zero() {
                                gp[r * d + c] -= scale * w * t / p;
                            }
                        }
                    }
                }
            }
            Op::SegmentMax { x, argmax } => {
                let d = node.value.cols();
                if let Some(gx) = self.grad_slot(grads, *x) {
                    for (i, r) in argmax.iter().enumerate() {
                        gx[r * d + i % d] += g[i];
                    }
                }
            }
            Op::Propagate { adj, x } => {
                let w = node.value.cols();
                if let Some(gx) = self.grad_slot(grads, *x) {
                    adj.apply_transpose_acc(g, w, gx);
                }
            }
            Op::WeightedSum { x, weights } => {
                if let Some(gx) = self.grad_slot(grads, *x) {
                    for (d, w) in gx.iter_mut().zip(weights) {
                        *d += g[0] * *w;
                    }
                }
            }
        }
    }

    /// Adds each named parameter's gradient into the matching store entry.
    /// Parameters not reached by the sweep contribute zeros.
    pub fn accumulate_param_grads(&self, grads: &Gradients<T>, store: &mut ParameterStore<T>) -> Result<()> {
        for (v, name) in &self.params {
            let t = store.get_mut(name)?;
            match grads.get(*v) {
                Some(g) => t.accumulate_grad(g),
                None => {
                    if t.grad().is_none() {
                        t.zero_grad();
                    }
                }
            }
        }
        Ok(())
    }

    /// Names of the parameter leaves registered so far, in creation order.
    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|(_, n)| n.as_str())
    }
}

fn add_assign<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += *s;
    }
}

/// Row-wise tempered softmax without graph tracking.
pub(crate) fn softmax_rows<T: Scalar>(x: &Tensor<T>, tau: T) -> Tensor<T> {
    let d = x.cols();
    let mut out = Vec::with_capacity(x.len());
    for r in 0..x.rows() {
        let row = x.row(r);
        let max = row
            .iter()
            .fold(T::neg_infinity(), |a, b| if *b > a { *b } else { a });
        let start = out.len();
        let mut sum = T::zero();
        for v in row {
            let e = (*v / tau - max / tau).exp();
            sum += e;
            out.push(e);
        }
        for v in &mut out[start..start + d] {
            *v /= sum;
        }
    }
    Tensor::new(x.shape(), out).expect("same shape")
}
