//! Define-by-run recording of tensor operations with reverse-mode
//! differentiation.
//!
//! A [`Tape`] lives for one forward/backward pass. Every operation appends a
//! node holding its output value and the inputs needed by its backward rule;
//! node indices are therefore a topological order and [`Tape::backward`]
//! walks them once in reverse.

use super::dense::gemm;
use super::{SparseAdjacency, Tensor, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Denominator offset used by [`Tape::batch_norm`].
pub const BN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

/// Statistics a batch-norm node normalized with.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased (population) variance over the node dimension.
    pub var: Vec<f64>,
    pub n: usize,
}

enum Op<'g> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    AddRowBias(Var, Var),
    Scale(Var, f64),
    Unary(Var, Activation),
    SumAll(Var),
    NeighborSum(Var, &'g SparseAdjacency),
    GatedNeighborSum {
        h: Var,
        gates: Var,
        adj: &'g SparseAdjacency,
    },
    EdgePairSum {
        at_target: Var,
        at_source: Var,
        adj: &'g SparseAdjacency,
    },
    ScatterToTargets(Var, &'g SparseAdjacency),
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        stats: Option<BatchStats>,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        probs: Vec<f64>,
        targets: Vec<usize>,
        coef: Vec<f64>,
    },
}

struct Node<'g> {
    value: Tensor,
    op: Op<'g>,
    requires_grad: bool,
}

/// Operation recorder. `'g` is the lifetime of the graph structures that
/// aggregation nodes borrow.
#[derive(Default)]
pub struct Tape<'g> {
    nodes: Vec<Node<'g>>,
    grads: Vec<Option<Tensor>>,
}

fn shape_err(op: &'static str, left: [usize; 2], right: [usize; 2]) -> TensorError {
    TensorError::ShapeMismatch { op, left, right }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

impl<'g> Tape<'g> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op<'g>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Accumulated gradient of `v`, present once a backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    /// Batch statistics of a training-mode [`Tape::batch_norm`] node.
    pub fn batch_stats(&self, v: Var) -> Option<&BatchStats> {
        match &self.nodes[v.0].op {
            Op::BatchNorm { stats, .. } => stats.as_ref(),
            _ => None,
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa[1] != sb[0] {
            return Err(shape_err("matmul", sa, sb));
        }
        let mut out = Tensor::zeros(sa[0], sb[1]);
        gemm(
            self.value(a).data(),
            sa,
            false,
            self.value(b).data(),
            sb,
            false,
            out.data_mut(),
            0.0,
        );
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    fn zip_same(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(op, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(ta.rows(), ta.cols(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.zip_same("add", a, b, |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.zip_same("sub", a, b, |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.zip_same("hadamard", a, b, |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Hadamard(a, b), rg))
    }

    /// Adds the `1 × d` row `bias` to every row of `x`.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var, TensorError> {
        let (tx, tb) = (self.value(x), self.value(bias));
        if tb.rows() != 1 || tb.cols() != tx.cols() {
            return Err(shape_err("add_row_bias", tx.shape(), tb.shape()));
        }
        let mut out = tx.clone();
        let d = tx.cols();
        if d > 0 {
            for row in out.data_mut().chunks_mut(d) {
                add_into(row, tb.data());
            }
        }
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(out, Op::AddRowBias(x, bias), rg))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let out = self.value(x).map(|v| v * s);
        let rg = self.rg(x);
        self.push(out, Op::Scale(x, s), rg)
    }

    pub fn activation(&mut self, x: Var, act: Activation) -> Var {
        let tx = self.value(x);
        let out = match act {
            Activation::Sigmoid => tx.map(sigmoid),
            Activation::Tanh => tx.map(f64::tanh),
            Activation::Relu => tx.map(|v| if v > 0.0 { v } else { 0.0 }),
        };
        let rg = self.rg(x);
        self.push(out, Op::Unary(x, act), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Tanh)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Relu)
    }

    /// Sum of all entries as a `1 × 1` tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::SumAll(x), rg)
    }

    fn check_nodes(&self, op: &'static str, x: Var, adj: &SparseAdjacency) -> Result<(), TensorError> {
        let rows = self.value(x).rows();
        if rows != adj.n_nodes() {
            return Err(TensorError::Structural(format!(
                "{op}: {rows} rows for a graph of {} nodes",
                adj.n_nodes()
            )));
        }
        Ok(())
    }

    fn check_edges(&self, op: &'static str, x: Var, adj: &SparseAdjacency) -> Result<(), TensorError> {
        let rows = self.value(x).rows();
        if rows != adj.n_edges() {
            return Err(TensorError::Structural(format!(
                "{op}: {rows} edge rows for {} directed edges",
                adj.n_edges()
            )));
        }
        Ok(())
    }

    /// Row `i` of the result is `Σ_{j → i} h_j`.
    pub fn neighbor_sum(&mut self, h: Var, adj: &'g SparseAdjacency) -> Result<Var, TensorError> {
        self.check_nodes("neighbor_sum", h, adj)?;
        let th = self.value(h);
        let d = th.cols();
        let mut out = Tensor::zeros(adj.n_nodes(), d);
        let od = out.data_mut();
        for i in 0..adj.n_nodes() {
            let row = &mut od[i * d..(i + 1) * d];
            for &j in adj.neighbors(i) {
                add_into(row, th.row_slice(j));
            }
        }
        let rg = self.rg(h);
        Ok(self.push(out, Op::NeighborSum(h, adj), rg))
    }

    /// Row `i` of the result is `Σ_{j → i} gates_{e(j→i)} ⊙ h_j`, with one gate
    /// row per directed edge in adjacency order.
    pub fn gated_neighbor_sum(
        &mut self,
        h: Var,
        gates: Var,
        adj: &'g SparseAdjacency,
    ) -> Result<Var, TensorError> {
        self.check_nodes("gated_neighbor_sum", h, adj)?;
        self.check_edges("gated_neighbor_sum", gates, adj)?;
        let (th, tg) = (self.value(h), self.value(gates));
        if th.cols() != tg.cols() {
            return Err(shape_err("gated_neighbor_sum", th.shape(), tg.shape()));
        }
        let d = th.cols();
        let mut out = Tensor::zeros(adj.n_nodes(), d);
        let od = out.data_mut();
        let src = adj.sources();
        for i in 0..adj.n_nodes() {
            let row = &mut od[i * d..(i + 1) * d];
            for e in adj.incoming(i) {
                let hj = th.row_slice(src[e]);
                let g = tg.row_slice(e);
                for k in 0..d {
                    row[k] += g[k] * hj[k];
                }
            }
        }
        let rg = self.rg(h) || self.rg(gates);
        Ok(self.push(out, Op::GatedNeighborSum { h, gates, adj }, rg))
    }

    /// Per-edge rows `at_target[target(e)] + at_source[source(e)]`.
    pub fn edge_pair_sum(
        &mut self,
        at_target: Var,
        at_source: Var,
        adj: &'g SparseAdjacency,
    ) -> Result<Var, TensorError> {
        self.check_nodes("edge_pair_sum", at_target, adj)?;
        self.check_nodes("edge_pair_sum", at_source, adj)?;
        let (ta, tb) = (self.value(at_target), self.value(at_source));
        if ta.cols() != tb.cols() {
            return Err(shape_err("edge_pair_sum", ta.shape(), tb.shape()));
        }
        let d = ta.cols();
        let mut out = Tensor::zeros(adj.n_edges(), d);
        let od = out.data_mut();
        for (e, (&s, &t)) in adj.sources().iter().zip(adj.targets()).enumerate() {
            let row = &mut od[e * d..(e + 1) * d];
            let (a, b) = (ta.row_slice(t), tb.row_slice(s));
            for k in 0..d {
                row[k] = a[k] + b[k];
            }
        }
        let rg = self.rg(at_target) || self.rg(at_source);
        Ok(self.push(
            out,
            Op::EdgePairSum {
                at_target,
                at_source,
                adj,
            },
            rg,
        ))
    }

    /// Sums per-edge rows into their target vertex.
    pub fn scatter_to_targets(&mut self, edges: Var, adj: &'g SparseAdjacency) -> Result<Var, TensorError> {
        self.check_edges("scatter_to_targets", edges, adj)?;
        let te = self.value(edges);
        let d = te.cols();
        let mut out = Tensor::zeros(adj.n_nodes(), d);
        let od = out.data_mut();
        for i in 0..adj.n_nodes() {
            let row = &mut od[i * d..(i + 1) * d];
            for e in adj.incoming(i) {
                add_into(row, te.row_slice(e));
            }
        }
        let rg = self.rg(edges);
        Ok(self.push(out, Op::ScatterToTargets(edges, adj), rg))
    }

    /// Normalizes each column over the rows with the current batch statistics,
    /// then applies the per-column affine `gamma`, `beta` (both `1 × d`).
    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var, TensorError> {
        let tx = self.value(x);
        let (n, d) = (tx.rows(), tx.cols());
        if n < 2 {
            return Err(TensorError::DegenerateBatch { n });
        }
        let mut mean = vec![0.0; d];
        for row in tx.data().chunks(d) {
            add_into(&mut mean, row);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        // constant columns normalize to exact zeros
        for (k, m) in mean.iter_mut().enumerate() {
            let first = tx.data()[k];
            if tx.data().iter().skip(k).step_by(d).all(|&v| v == first) {
                *m = first;
            }
        }
        let mut var = vec![0.0; d];
        for row in tx.data().chunks(d) {
            for k in 0..d {
                let c = row[k] - mean[k];
                var[k] += c * c;
            }
        }
        var.iter_mut().for_each(|v| *v /= n as f64);
        let stats = BatchStats { mean, var, n };
        self.batch_norm_with(x, gamma, beta, stats, true)
    }

    /// Batch norm with fixed statistics (inference mode); `var` is the variance
    /// to normalize with.
    pub fn batch_norm_fixed(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[f64],
        var: &[f64],
    ) -> Result<Var, TensorError> {
        let stats = BatchStats {
            mean: mean.to_vec(),
            var: var.to_vec(),
            n: self.value(x).rows(),
        };
        self.batch_norm_with(x, gamma, beta, stats, false)
    }

    fn batch_norm_with(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        stats: BatchStats,
        train: bool,
    ) -> Result<Var, TensorError> {
        let tx = self.value(x);
        let d = tx.cols();
        for p in [gamma, beta] {
            let s = self.value(p).shape();
            if s != [1, d] {
                return Err(shape_err("batch_norm", tx.shape(), s));
            }
        }
        if stats.mean.len() != d || stats.var.len() != d {
            return Err(shape_err("batch_norm", tx.shape(), [1, stats.mean.len()]));
        }
        let inv_std: Vec<f64> = stats.var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = tx.data().to_vec();
        let mut out = Tensor::zeros(tx.rows(), d);
        if d > 0 {
            for (xr, yr) in xhat.chunks_mut(d).zip(out.data_mut().chunks_mut(d)) {
                for k in 0..d {
                    xr[k] = (xr[k] - stats.mean[k]) * inv_std[k];
                    yr[k] = g[k] * xr[k] + b[k];
                }
            }
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                stats: train.then_some(stats),
            },
            rg,
        ))
    }

    /// Weighted mean cross-entropy of row-wise softmax.
    ///
    /// Each unmasked row `i` contributes `-w[t_i] · log softmax(logits_i)[t_i]`;
    /// the sum is divided by `Σ w[t_i]` over unmasked rows.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
        class_weights: &[f64],
        mask: Option<&[bool]>,
    ) -> Result<Var, TensorError> {
        let tl = self.value(logits);
        let (n, c) = (tl.rows(), tl.cols());
        if targets.len() != n {
            return Err(TensorError::Contract(format!(
                "{} targets for {n} logit rows",
                targets.len()
            )));
        }
        if class_weights.len() != c {
            return Err(TensorError::Contract(format!(
                "{} class weights for {c} classes",
                class_weights.len()
            )));
        }
        if let Some(m) = mask {
            if m.len() != n {
                return Err(TensorError::Contract(format!("mask of length {} for {n} rows", m.len())));
            }
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= c) {
            return Err(TensorError::Contract(format!("target {t} outside [0, {c})")));
        }
        if class_weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(TensorError::Contract("class weights must be finite and non-negative".into()));
        }
        let active = |i: usize| mask.is_none_or(|m| m[i]);
        let total_weight: f64 = (0..n).filter(|&i| active(i)).map(|i| class_weights[targets[i]]).sum();
        if !(0..n).any(active) || total_weight <= 0.0 {
            return Err(TensorError::EmptyLoss);
        }
        let mut probs = vec![0.0; n * c];
        let mut coef = vec![0.0; n];
        let mut loss = 0.0;
        for i in 0..n {
            let row = tl.row_slice(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for k in 0..c {
                let e = (row[k] - max).exp();
                probs[i * c + k] = e;
                z += e;
            }
            probs[i * c..(i + 1) * c].iter_mut().for_each(|p| *p /= z);
            if active(i) {
                let w = class_weights[targets[i]] / total_weight;
                coef[i] = w;
                let nll = z.ln() + max - row[targets[i]];
                loss += w * nll;
            }
        }
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                targets: targets.to_vec(),
                coef,
            },
            rg,
        ))
    }

    /// Propagates `d loss / d node` to every node that requires a gradient and
    /// adds it to that node's stored gradient.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        let shape = self.value(loss).shape();
        if shape != [1, 1] {
            return Err(TensorError::NonScalarLoss { shape });
        }
        if !self.rg(loss) {
            return Ok(());
        }
        let mut adj: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.propagate(node, &g, &mut adj);
            match &mut self.grads[idx] {
                Some(acc) => add_into(acc.data_mut(), &g),
                slot @ None => {
                    let [r, c] = node.value.shape();
                    *slot = Some(Tensor::from_vec(r, c, g).expect("adjoint shape"));
                }
            }
        }
        Ok(())
    }

    fn propagate(&self, node: &Node<'g>, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let val = |v: Var| &nodes[v.0].value;

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let gs = node.value.shape();
                if let Some(da) = slot(nodes, adj, *a) {
                    gemm(g, gs, false, tb.data(), tb.shape(), true, da, 1.0);
                }
                if let Some(db) = slot(nodes, adj, *b) {
                    gemm(ta.data(), ta.shape(), true, g, gs, false, db, 1.0);
                }
            }
            Op::Add(a, b) => {
                if let Some(da) = slot(nodes, adj, *a) {
                    add_into(da, g);
                }
                if let Some(db) = slot(nodes, adj, *b) {
                    add_into(db, g);
                }
            }
            Op::Sub(a, b) => {
                if let Some(da) = slot(nodes, adj, *a) {
                    add_into(da, g);
                }
                if let Some(db) = slot(nodes, adj, *b) {
                    db.iter_mut().zip(g).for_each(|(d, x)| *d -= x);
                }
            }
            Op::Hadamard(a, b) => {
                let (ta, tb) = (val(*a).data(), val(*b).data());
                if let Some(da) = slot(nodes, adj, *a) {
                    for k in 0..g.len() {
                        da[k] += g[k] * tb[k];
                    }
                }
                if let Some(db) = slot(nodes, adj, *b) {
                    for k in 0..g.len() {
                        db[k] += g[k] * ta[k];
                    }
                }
            }
            Op::AddRowBias(x, bias) => {
                if let Some(dx) = slot(nodes, adj, *x) {
                    add_into(dx, g);
                }
                let d = node.value.cols();
                if let Some(db) = slot(nodes, adj, *bias) {
                    if d > 0 {
                        for row in g.chunks(d) {
                            add_into(db, row);
                        }
                    }
                }
            }
            Op::Scale(x, s) => {
                if let Some(dx) = slot(nodes, adj, *x) {
                    dx.iter_mut().zip(g).for_each(|(d, gv)| *d += s * gv);
                }
            }
            Op::Unary(x, act) => {
                let y = node.value.data();
                if let Some(dx) = slot(nodes, adj, *x) {
                    match act {
                        Activation::Sigmoid => {
                            for k in 0..g.len() {
                                dx[k] += g[k] * y[k] * (1.0 - y[k]);
                            }
                        }
                        Activation::Tanh => {
                            for k in 0..g.len() {
                                dx[k] += g[k] * (1.0 - y[k] * y[k]);
                            }
                        }
                        Activation::Relu => {
                            for k in 0..g.len() {
                                if y[k] > 0.0 {
                                    dx[k] += g[k];
                                }
                            }
                        }
                    }
                }
            }
            Op::SumAll(x) => {
                if let Some(dx) = slot(nodes, adj, *x) {
                    dx.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::NeighborSum(h, a) => {
                let d = node.value.cols();
                if let Some(dh) = slot(nodes, adj, *h) {
                    for i in 0..a.n_nodes() {
                        let gi = &g[i * d..(i + 1) * d];
                        for &j in a.neighbors(i) {
                            add_into(&mut dh[j * d..(j + 1) * d], gi);
                        }
                    }
                }
            }
            Op::GatedNeighborSum { h, gates, adj: a } => {
                let d = node.value.cols();
                let (th, tg) = (val(*h), val(*gates));
                let src = a.sources();
                if let Some(dh) = slot(nodes, adj, *h) {
                    for i in 0..a.n_nodes() {
                        let gi = &g[i * d..(i + 1) * d];
                        for e in a.incoming(i) {
                            let ge = tg.row_slice(e);
                            let dj = &mut dh[src[e] * d..(src[e] + 1) * d];
                            for k in 0..d {
                                dj[k] += gi[k] * ge[k];
                            }
                        }
                    }
                }
                if let Some(dg) = slot(nodes, adj, *gates) {
                    for i in 0..a.n_nodes() {
                        let gi = &g[i * d..(i + 1) * d];
                        for e in a.incoming(i) {
                            let hj = th.row_slice(src[e]);
                            let de = &mut dg[e * d..(e + 1) * d];
                            for k in 0..d {
                                de[k] += gi[k] * hj[k];
                            }
                        }
                    }
                }
            }
            Op::EdgePairSum {
                at_target,
                at_source,
                adj: a,
            } => {
                let d = node.value.cols();
                if let Some(dt) = slot(nodes, adj, *at_target) {
                    for (e, &t) in a.targets().iter().enumerate() {
                        add_into(&mut dt[t * d..(t + 1) * d], &g[e * d..(e + 1) * d]);
                    }
                }
                if let Some(ds) = slot(nodes, adj, *at_source) {
                    for (e, &s) in a.sources().iter().enumerate() {
                        add_into(&mut ds[s * d..(s + 1) * d], &g[e * d..(e + 1) * d]);
                    }
                }
            }
            Op::ScatterToTargets(edges, a) => {
                let d = node.value.cols();
                if let Some(de) = slot(nodes, adj, *edges) {
                    for (e, &t) in a.targets().iter().enumerate() {
                        add_into(&mut de[e * d..(e + 1) * d], &g[t * d..(t + 1) * d]);
                    }
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                stats,
            } => {
                let d = node.value.cols();
                let n = node.value.rows();
                let gam = val(*gamma).data().to_vec();
                if d == 0 {
                    return;
                }
                let mut sum_g = vec![0.0; d];
                let mut sum_gx = vec![0.0; d];
                for (gr, xr) in g.chunks(d).zip(xhat.chunks(d)) {
                    for k in 0..d {
                        sum_g[k] += gr[k];
                        sum_gx[k] += gr[k] * xr[k];
                    }
                }
                if let Some(dgam) = slot(nodes, adj, *gamma) {
                    add_into(dgam, &sum_gx);
                }
                if let Some(dbeta) = slot(nodes, adj, *beta) {
                    add_into(dbeta, &sum_g);
                }
                if let Some(dx) = slot(nodes, adj, *x) {
                    let nf = n as f64;
                    for ((dr, gr), xr) in dx.chunks_mut(d).zip(g.chunks(d)).zip(xhat.chunks(d)) {
                        for k in 0..d {
                            let scale = gam[k] * inv_std[k];
                            if stats.is_some() {
                                dr[k] += scale * (gr[k] - sum_g[k] / nf - xr[k] * sum_gx[k] / nf);
                            } else {
                                dr[k] += scale * gr[k];
                            }
                        }
                    }
                }
            }
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                targets,
                coef,
            } => {
                let c = val(*logits).cols();
                if let Some(dl) = slot(nodes, adj, *logits) {
                    for (i, &t) in targets.iter().enumerate() {
                        let w = coef[i] * g[0];
                        if w == 0.0 {
                            continue;
                        }
                        for k in 0..c {
                            let onehot = if k == t { 1.0 } else { 0.0 };
                            dl[i * c + k] += w * (probs[i * c + k] - onehot);
                        }
                    }
                }
            }
        }
    }
}

// Gradient buffer for `v`, or None if `v` does not need one.
fn slot<'a>(nodes: &[Node<'_>], adj: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
    let n = &nodes[v.0];
    if !n.requires_grad {
        return None;
    }
    Some(adj[v.0].get_or_insert_with(|| vec![0.0; n.value.len()]))
}

/// `e^y` for `y ≤ 0` (flushed to zero below `e^-708`), branch-free so
/// slice loops vectorize. Cody–Waite
/// reduction to `|r| ≤ ln2/2` and a degree-13 Taylor polynomial; within a
/// few ulp of `f64::exp`.
#[inline(always)]
fn exp_nonpositive(y: f64) -> f64 {
    const LOG2E: f64 = std::f64::consts::LOG2_E;
    const LN2_HI: f64 = 6.931_471_803_691_238e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    const SHIFT: f64 = 6_755_399_441_055_744.0; // 1.5 · 2^52
    let underflow = y < -708.0;
    let y = y.max(-708.0);
    let t = y * LOG2E + SHIFT;
    let k = t - SHIFT;
    let r = (y - k * LN2_HI) - k * LN2_LO;
    let mut p = 1.0 / 6_227_020_800.0;
    for c in [
        1.0 / 479_001_600.0,
        1.0 / 39_916_800.0,
        1.0 / 3_628_800.0,
        1.0 / 362_880.0,
        1.0 / 40_320.0,
        1.0 / 5_040.0,
        1.0 / 720.0,
        1.0 / 120.0,
        1.0 / 24.0,
        1.0 / 6.0,
        0.5,
        1.0,
        1.0,
    ] {
        p = p * r + c;
    }
    // the low mantissa bits of t hold k in two's complement
    let scale = f64::from_bits(t.to_bits().wrapping_add(1023) << 52);
    if underflow {
        0.0
    } else {
        p * scale
    }
}

pub fn sigmoid(x: f64) -> f64 {
    let e = exp_nonpositive(-x.abs());
    let s = 1.0 / (1.0 + e);
    if x >= 0.0 {
        s
    } else {
        e * s
    }
}
