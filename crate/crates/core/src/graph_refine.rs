//! Pseudo-label refinement on a similarity graph over target samples.
//!
//! Nodes are target samples, edges join pairs whose descriptors have cosine
//! similarity above a threshold, and a three-layer GCN trained on the
//! current pseudo-labels re-predicts every node.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::rc::Rc;

use log::{debug, warn};

use crate::error::{Error, Result};
use crate::network::glorot;
use crate::rng::{Purpose, Rng};
use crate::tensor::{Adam, AdamConfig, Graph, ParameterStore, Scalar, SparseRows, Tensor, Var};

pub const W0: &str = "gcn.w0";
pub const W1: &str = "gcn.w1";
pub const W2: &str = "gcn.w2";
pub const PROJ: &str = "gcn.proj";

/// Binary symmetric similarity graph plus the node data it was built from.
#[derive(Debug, Clone)]
pub struct TargetGraph<T> {
    /// Neighbors of each node, most similar first. Ties are broken by the
    /// neighbor's embedding, so the order does not depend on node labels.
    neighbors: Vec<Vec<usize>>,
    embeddings: Tensor<T>,
    predictions: Tensor<T>,
    epsilon: f64,
}

fn unit_rows<T: Scalar>(g: &Tensor<T>) -> Result<Vec<Vec<f64>>> {
    (0..g.rows())
        .map(|i| {
            let row: Vec<f64> = g.row(i).iter().map(|v| v.as_f64()).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::Numeric(format!("embedding of node {i} has zero or non-finite norm")));
            }
            Ok(row.into_iter().map(|v| v / norm).collect())
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn lex_cmp<T: Scalar>(a: &[T], b: &[T]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.as_f64().total_cmp(&y.as_f64()) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// All pairwise cosine similarities, `n×n` row-major.
pub fn cosine_matrix<T: Scalar>(embeddings: &Tensor<T>) -> Result<Vec<f64>> {
    let unit = unit_rows(embeddings)?;
    let n = unit.len();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        out[i * n + i] = 1.0;
        for j in i + 1..n {
            let c = dot(&unit[i], &unit[j]);
            out[i * n + j] = c;
            out[j * n + i] = c;
        }
    }
    Ok(out)
}

/// Joins `i ≠ j` whenever `cos(g_i, g_j) > epsilon`.
pub fn build_graph<T: Scalar>(embeddings: Tensor<T>, predictions: Tensor<T>, epsilon: f64) -> Result<TargetGraph<T>> {
    let n = embeddings.rows();
    if predictions.rows() != n {
        return Err(Error::Dimension {
            op: "build_graph",
            lhs: embeddings.shape().to_vec(),
            rhs: predictions.shape().to_vec(),
        });
    }
    for i in 0..n {
        let s: f64 = predictions.row(i).iter().map(|v| v.as_f64()).sum();
        if (s - 1.0).abs() > 1e-6 || predictions.row(i).iter().any(|v| v.as_f64() < 0.0) {
            return Err(Error::Numeric(format!("prediction row {i} is not a distribution (sum {s})")));
        }
    }
    let cos = cosine_matrix(&embeddings)?;
    let neighbors = (0..n)
        .map(|i| {
            let mut nb: Vec<usize> = (0..n).filter(|&j| j != i && cos[i * n + j] > epsilon).collect();
            nb.sort_by(|&a, &b| {
                cos[i * n + b]
                    .total_cmp(&cos[i * n + a])
                    .then_with(|| lex_cmp(embeddings.row(a), embeddings.row(b)))
                    .then_with(|| lex_cmp(predictions.row(a), predictions.row(b)))
                    .then(a.cmp(&b))
            });
            nb
        })
        .collect();
    Ok(TargetGraph {
        neighbors,
        embeddings,
        predictions,
        epsilon,
    })
}

impl<T: Scalar> TargetGraph<T> {
    pub fn num_nodes(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].contains(&j)
    }

    pub fn num_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn mean_degree(&self) -> f64 {
        if self.neighbors.is_empty() {
            return 0.0;
        }
        2.0 * self.num_edges() as f64 / self.num_nodes() as f64
    }

    pub fn embeddings(&self) -> &Tensor<T> {
        &self.embeddings
    }

    pub fn predictions(&self) -> &Tensor<T> {
        &self.predictions
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `D̃^{-1/2} (A + I) D̃^{-1/2}`, self-loop first in every row.
    pub fn normalized_adjacency(&self) -> SparseRows<T> {
        let deg: Vec<f64> = self.neighbors.iter().map(|nb| (nb.len() + 1) as f64).collect();
        let rows = self
            .neighbors
            .iter()
            .enumerate()
            .map(|(i, nb)| {
                std::iter::once(i)
                    .chain(nb.iter().copied())
                    .map(|j| (j, T::lit(1.0 / (deg[i] * deg[j]).sqrt())))
                    .collect()
            })
            .collect();
        SparseRows::from_rows(rows, self.num_nodes()).expect("neighbor indices are in range")
    }

    /// Header `nodes=<n> eps=<ε>` then one `i<TAB>j` line per edge, `i < j`.
    pub fn dump(&self) -> String {
        let mut s = format!("nodes={} eps={}\n", self.num_nodes(), self.epsilon);
        for (i, nb) in self.neighbors.iter().enumerate() {
            let mut upper: Vec<usize> = nb.iter().copied().filter(|&j| j > i).collect();
            upper.sort_unstable();
            for j in upper {
                let _ = writeln!(s, "{i}\t{j}");
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub epsilon: f64,
    pub degree: f64,
    /// False when no threshold brought the mean degree within 20% of target.
    pub reached: bool,
}

fn mean_degree_at(cos: &[f64], n: usize, eps: f64) -> f64 {
    let mut edges = 0usize;
    for i in 0..n {
        edges += cos[i * n + i + 1..(i + 1) * n].iter().filter(|&&c| c > eps).count();
    }
    2.0 * edges as f64 / n as f64
}

/// Bisects the threshold so the mean degree lands within ±20% of
/// `target_degree`, giving up after 30 halvings.
pub fn calibrate_epsilon<T: Scalar>(embeddings: &Tensor<T>, target_degree: f64) -> Result<Calibration> {
    if !(target_degree >= 1.0) {
        return Err(Error::Config(format!("target degree must be >= 1, got {target_degree}")));
    }
    let n = embeddings.rows();
    let cos = cosine_matrix(embeddings)?;
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    let mut best = Calibration {
        epsilon: 0.0,
        degree: f64::INFINITY,
        reached: false,
    };
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        let degree = mean_degree_at(&cos, n, mid);
        if (degree - target_degree).abs() < (best.degree - target_degree).abs() {
            best = Calibration {
                epsilon: mid,
                degree,
                reached: false,
            };
        }
        if (degree - target_degree).abs() <= 0.2 * target_degree {
            best.reached = true;
            break;
        }
        if degree > target_degree {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if !best.reached {
        warn!(
            "graph degree {target_degree} unreachable; using eps={} with mean degree {}",
            best.epsilon, best.degree
        );
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnConfig {
    pub hidden: [usize; 2],
    pub epochs: usize,
    pub lr: f64,
    pub mask_frac: f64,
}

impl Default for GcnConfig {
    fn default() -> Self {
        GcnConfig {
            hidden: [128, 64],
            epochs: 100,
            lr: 1e-2,
            mask_frac: 0.2,
        }
    }
}

impl GcnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) || self.epochs == 0 {
            return Err(Error::Config("gcn widths and epochs must be positive".into()));
        }
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.mask_frac) {
            return Err(Error::Config("gcn lr must be positive and mask fraction in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Three propagation layers `D → h₁ → h₂ → K` plus the `K → D` projection
/// that folds classifier outputs into the node input.
#[derive(Debug, Clone)]
pub struct GcnModel<T> {
    pub params: ParameterStore<T>,
    pub mask_frac: f64,
}

impl<T: Scalar> GcnModel<T> {
    pub fn new(descriptor_dim: usize, num_classes: usize, cfg: &GcnConfig, rng: &mut Rng) -> Result<Self> {
        let mut params = ParameterStore::new();
        let [h1, h2] = cfg.hidden;
        params.insert(W0, glorot(descriptor_dim, h1, rng))?;
        params.insert(W1, glorot(h1, h2, rng))?;
        params.insert(W2, glorot(h2, num_classes, rng))?;
        params.insert(PROJ, glorot(num_classes, descriptor_dim, rng))?;
        Ok(GcnModel {
            params,
            mask_frac: cfg.mask_frac,
        })
    }
}

/// Exactly `⌊frac·n⌋` distinct nodes.
pub fn mask_nodes(n: usize, frac: f64, rng: &mut Rng) -> Vec<usize> {
    let k = ((frac * n as f64) + 1e-9).floor() as usize;
    let mut m = rng.sample_indices(n, k.min(n));
    m.sort_unstable();
    m
}

/// `H⁽⁰⁾ = G + P·W_D`, with the prediction rows of `masked` zeroed first.
pub fn node_inputs<T: Scalar>(g: &mut Graph<T>, graph: &TargetGraph<T>, model: &GcnModel<T>, masked: &[usize]) -> Result<Var> {
    let mut p = graph.predictions.clone();
    let k = p.cols();
    for &i in masked {
        p.data_mut()[i * k..(i + 1) * k].iter_mut().for_each(|v| *v = T::zero());
    }
    let p = g.constant(p);
    let e = g.constant(graph.embeddings.clone());
    let proj = g.param_from(&model.params, PROJ)?;
    let pw = g.matmul(p, proj)?;
    g.add(e, pw)
}

/// Logits after three normalized propagations; ReLU after the first two.
pub fn gcn_forward<T: Scalar>(g: &mut Graph<T>, adj: &Rc<SparseRows<T>>, model: &GcnModel<T>, h0: Var) -> Result<Var> {
    let mut h = h0;
    for (l, name) in [W0, W1, W2].into_iter().enumerate() {
        let w = g.param_from(&model.params, name)?;
        let ah = g.propagate(Rc::clone(adj), h)?;
        h = g.matmul(ah, w)?;
        if l < 2 {
            h = g.relu(h);
        }
    }
    Ok(h)
}

/// Node class probabilities at inference (no masking).
pub fn gcn_predict<T: Scalar>(graph: &TargetGraph<T>, model: &GcnModel<T>) -> Result<Tensor<T>> {
    let adj = Rc::new(graph.normalized_adjacency());
    let mut g = Graph::new();
    let h0 = node_inputs(&mut g, graph, model, &[])?;
    let logits = gcn_forward(&mut g, &adj, model, h0)?;
    let probs = g.row_softmax(logits, T::one())?;
    Ok(g.value(probs).clone())
}

/// Trains a freshly initialized GCN on every node's pseudo-label with full
/// graph batches, resampling the input mask each epoch. Returns the model
/// and the per-epoch loss.
pub fn train_gcn<T: Scalar>(
    graph: &TargetGraph<T>,
    labels: &[Option<usize>],
    cfg: &GcnConfig,
    rng: &Rng,
) -> Result<(GcnModel<T>, Vec<f64>)> {
    cfg.validate()?;
    let n = graph.num_nodes();
    let k = graph.predictions.cols();
    if labels.len() != n {
        return Err(Error::State(format!("{} pseudo-labels for {n} graph nodes", labels.len())));
    }
    let mut onehot = Tensor::zeros(&[n, k]);
    for (i, l) in labels.iter().enumerate() {
        match l {
            Some(c) if *c < k => onehot.data_mut()[i * k + c] = T::one(),
            Some(c) => return Err(Error::State(format!("node {i} has pseudo-label {c} outside {k} classes"))),
            None => return Err(Error::State(format!("node {i} has no pseudo-label"))),
        }
    }
    let mut model = GcnModel::new(graph.embeddings.cols(), k, cfg, &mut rng.fork(Purpose::Gcn, &[0]))?;
    let mut opt = Adam::new(AdamConfig::with_lr(cfg.lr));
    let adj = Rc::new(graph.normalized_adjacency());
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let masked = mask_nodes(n, cfg.mask_frac, &mut rng.fork(Purpose::Mask, &[epoch as u64]));
        let mut g = Graph::new();
        let h0 = node_inputs(&mut g, graph, &model, &masked)?;
        let logits = gcn_forward(&mut g, &adj, &model, h0)?;
        let probs = g.row_softmax(logits, T::one())?;
        let target = g.constant(onehot.clone());
        let loss = g.cross_entropy(target, probs)?;
        losses.push(g.value(loss).item().as_f64());
        let grads = g.backward(loss)?;
        g.accumulate_param_grads(&grads, &mut model.params)?;
        opt.step(&mut model.params)?;
    }
    debug!(
        "gcn trained: loss {:.4} -> {:.4}",
        losses.first().copied().unwrap_or(f64::NAN),
        losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok((model, losses))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    /// Argmax of every node's probability row.
    pub predicted: Vec<usize>,
    /// Selected nodes, ascending.
    pub confident: Vec<usize>,
}

/// For each predicted class, the `⌊θ·count⌋` nodes with the highest maximum
/// probability (lower index first on ties).
pub fn select_confident<T: Scalar>(probs: &Tensor<T>, theta: f64) -> Result<Selection> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::Config(format!("theta must be in [0, 1], got {theta}")));
    }
    let predicted = probs.argmax_rows();
    let k = probs.cols();
    let mut confident = Vec::new();
    for c in 0..k {
        let mut members: Vec<usize> = (0..predicted.len()).filter(|&i| predicted[i] == c).collect();
        if members.is_empty() {
            debug!("class {c} has no predicted nodes");
            continue;
        }
        members.sort_by(|&a, &b| probs.get(b, c).as_f64().total_cmp(&probs.get(a, c).as_f64()).then(a.cmp(&b)));
        let take = ((theta * members.len() as f64) + 1e-9).floor() as usize;
        confident.extend_from_slice(&members[..take.min(members.len())]);
    }
    confident.sort_unstable();
    Ok(Selection { predicted, confident })
}
