//! The autodiff tape: eager forward evaluation, reverse-order backward.

use std::collections::HashMap;

use ndarray::{concatenate, s, Array2, Axis};

use super::params::{ParamId, ParamStore};

/// Index of a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    GatherRows(ParamId, Vec<usize>),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    MulRow(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MulScalar(NodeId, NodeId),
    ScaleConst(NodeId, f64),
    Transpose(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    SoftmaxRows(NodeId),
    /// Row-wise layer norm without affine part; saves (mean, inv_std) per row.
    LayerNormRows(NodeId, Vec<(f64, f64)>),
    SumAll(NodeId),
    ConcatRows(Vec<NodeId>),
    ConcatCols(Vec<NodeId>),
    SliceRows(NodeId, usize, usize),
    /// Softmax cross-entropy of a 1-row logit vector against a target index;
    /// saves the softmax probabilities.
    SoftmaxCrossEntropy(NodeId, usize, Array2<f64>),
    /// Mean binary cross-entropy with logits; the label column is constant.
    BceWithLogits(NodeId, Array2<f64>),
}

struct Node {
    value: Array2<f64>,
    grad: Option<Array2<f64>>,
    op: Op,
}

/// One computation graph. Build with the `op` methods (forward runs
/// eagerly), then call [`Tape::backward`] on a scalar node.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_nodes: HashMap<ParamId, NodeId>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drop all nodes, keeping allocations for reuse across samples.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.param_nodes.clear();
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = self.value(id);
        debug_assert_eq!(v.dim(), (1, 1));
        v[(0, 0)]
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> NodeId {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// A constant input; receives no gradient.
    pub fn leaf(&mut self, value: Array2<f64>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn leaf_row(&mut self, row: &[f64]) -> NodeId {
        let value = Array2::from_shape_vec((1, row.len()), row.to_vec()).expect("row shape");
        self.leaf(value)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> NodeId {
        self.leaf(Array2::zeros((rows, cols)))
    }

    /// A parameter node. Memoized per tape so each parameter contributes a
    /// single node regardless of how many layers reference it.
    pub fn param(&mut self, ps: &ParamStore, id: ParamId) -> NodeId {
        if let Some(&node) = self.param_nodes.get(&id) {
            return node;
        }
        let node = self.push(ps.value(id).clone(), Op::Param(id));
        self.param_nodes.insert(id, node);
        node
    }

    /// Gather rows of an embedding parameter. Backward scatters into the
    /// parameter gradient; only the touched rows are copied.
    pub fn gather(&mut self, ps: &ParamStore, id: ParamId, rows: &[usize]) -> NodeId {
        let table = ps.value(id);
        let cols = table.ncols();
        let mut out = Array2::zeros((rows.len(), cols));
        for (i, &r) in rows.iter().enumerate() {
            out.row_mut(i).assign(&table.row(r));
        }
        self.push(out, Op::GatherRows(id, rows.to_vec()))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.dot(&self.nodes[b.0].value);
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = &self.nodes[a.0].value + &self.nodes[b.0].value;
        self.push(v, Op::Add(a, b))
    }

    /// `a (n×d) + b (1×d)` broadcast over rows.
    pub fn add_row(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let bv = self.nodes[b.0].value.row(0).to_owned();
        let v = &self.nodes[a.0].value + &bv;
        self.push(v, Op::AddRow(a, b))
    }

    /// `a (n×d) ⊙ b (1×d)` broadcast over rows.
    pub fn mul_row(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let bv = self.nodes[b.0].value.row(0).to_owned();
        let v = &self.nodes[a.0].value * &bv;
        self.push(v, Op::MulRow(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = &self.nodes[a.0].value - &self.nodes[b.0].value;
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = &self.nodes[a.0].value * &self.nodes[b.0].value;
        self.push(v, Op::Mul(a, b))
    }

    /// Multiply a matrix by a 1×1 scalar node.
    pub fn mul_scalar(&mut self, scalar: NodeId, a: NodeId) -> NodeId {
        let s = self.nodes[scalar.0].value[(0, 0)];
        let v = &self.nodes[a.0].value * s;
        self.push(v, Op::MulScalar(scalar, a))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = &self.nodes[a.0].value * c;
        self.push(v, Op::ScaleConst(a, c))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.t().to_owned();
        self.push(v, Op::Transpose(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.mapv(stable_sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a.0].value.mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    /// Row-wise softmax with max-shift; fully masked rows come out uniform.
    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let x = &self.nodes[a.0].value;
        let mut v = x.clone();
        for mut row in v.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|x| (x - max).exp());
            let sum: f64 = row.sum();
            row.mapv_inplace(|x| x / sum);
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    /// Row-wise layer normalization (no affine; pair with `mul_row`/`add_row`).
    pub fn layer_norm_rows(&mut self, a: NodeId) -> NodeId {
        const EPS: f64 = 1e-6;
        let x = &self.nodes[a.0].value;
        let d = x.ncols() as f64;
        let mut stats = Vec::with_capacity(x.nrows());
        let mut v = x.clone();
        for mut row in v.rows_mut() {
            let mean = row.sum() / d;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d;
            let inv_std = 1.0 / (var + EPS).sqrt();
            row.mapv_inplace(|x| (x - mean) * inv_std);
            stats.push((mean, inv_std));
        }
        self.push(v, Op::LayerNormRows(a, stats))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s = self.nodes[a.0].value.sum();
        self.push(Array2::from_elem((1, 1), s), Op::SumAll(a))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        let views: Vec<_> = parts.iter().map(|p| self.nodes[p.0].value.view()).collect();
        let v = concatenate(Axis(0), &views).expect("row concat shape");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let views: Vec<_> = parts.iter().map(|p| self.nodes[p.0].value.view()).collect();
        let v = concatenate(Axis(1), &views).expect("col concat shape");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let v = self.nodes[a.0]
            .value
            .slice(s![start..start + len, ..])
            .to_owned();
        self.push(v, Op::SliceRows(a, start, len))
    }

    /// Cross-entropy of the row softmax of `logits` (1×n) at `target`.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, target: usize) -> NodeId {
        let x = &self.nodes[logits.0].value;
        debug_assert_eq!(x.nrows(), 1);
        let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps = x.mapv(|v| (v - max).exp());
        let sum: f64 = exps.sum();
        let probs = exps / sum;
        let loss = -(probs[(0, target)].max(1e-300)).ln();
        self.push(
            Array2::from_elem((1, 1), loss),
            Op::SoftmaxCrossEntropy(logits, target, probs),
        )
    }

    /// Mean binary cross-entropy over an n×1 logit column with constant
    /// labels, computed in the numerically stable logit form.
    pub fn bce_with_logits(&mut self, logits: NodeId, labels: Array2<f64>) -> NodeId {
        let x = &self.nodes[logits.0].value;
        debug_assert_eq!(x.dim(), labels.dim());
        let n = x.nrows() as f64;
        let mut loss = 0.0;
        for (x, y) in x.iter().zip(labels.iter()) {
            loss += x.max(0.0) - x * y + (1.0 + (-x.abs()).exp()).ln();
        }
        loss /= n;
        self.push(
            Array2::from_elem((1, 1), loss),
            Op::BceWithLogits(logits, labels),
        )
    }

    /// Reverse pass from a 1×1 node, seeding its gradient with `scale`.
    /// Parameter gradients accumulate into `ps`; call repeatedly across a
    /// minibatch before an optimizer step.
    pub fn backward(&mut self, loss: NodeId, scale: f64, ps: &mut ParamStore) {
        debug_assert_eq!(self.nodes[loss.0].value.dim(), (1, 1));
        self.nodes[loss.0].grad = Some(Array2::from_elem((1, 1), scale));

        // Per node: compute child contributions under an immutable borrow,
        // then apply them. Children always precede parents on the tape, so
        // accumulation never revisits a processed node.
        let mut contribs: Vec<(NodeId, Array2<f64>)> = Vec::new();
        for i in (0..self.nodes.len()).rev() {
            let Some(g) = self.nodes[i].grad.take() else {
                continue;
            };
            contribs.clear();
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::Param(pid) => {
                    *ps.grad_mut(*pid) += &g;
                }
                Op::GatherRows(pid, rows) => {
                    let grad = ps.grad_mut(*pid);
                    for (r, &row) in rows.iter().enumerate() {
                        let mut target = grad.row_mut(row);
                        target += &g.row(r);
                    }
                }
                Op::MatMul(a, b) => {
                    contribs.push((*a, g.dot(&self.nodes[b.0].value.t())));
                    contribs.push((*b, self.nodes[a.0].value.t().dot(&g)));
                }
                Op::Add(a, b) => {
                    contribs.push((*a, g.clone()));
                    contribs.push((*b, g));
                }
                Op::AddRow(a, b) => {
                    contribs.push((*b, g.sum_axis(Axis(0)).insert_axis(Axis(0))));
                    contribs.push((*a, g));
                }
                Op::MulRow(a, b) => {
                    let bv = self.nodes[b.0].value.row(0).to_owned();
                    contribs.push((
                        *b,
                        (&g * &self.nodes[a.0].value)
                            .sum_axis(Axis(0))
                            .insert_axis(Axis(0)),
                    ));
                    contribs.push((*a, &g * &bv));
                }
                Op::Sub(a, b) => {
                    contribs.push((*a, g.clone()));
                    contribs.push((*b, -g));
                }
                Op::Mul(a, b) => {
                    contribs.push((*a, &g * &self.nodes[b.0].value));
                    contribs.push((*b, &g * &self.nodes[a.0].value));
                }
                Op::MulScalar(sn, a) => {
                    let s = self.nodes[sn.0].value[(0, 0)];
                    let gs = (&g * &self.nodes[a.0].value).sum();
                    contribs.push((*sn, Array2::from_elem((1, 1), gs)));
                    contribs.push((*a, &g * s));
                }
                Op::ScaleConst(a, c) => {
                    contribs.push((*a, &g * *c));
                }
                Op::Transpose(a) => {
                    contribs.push((*a, g.t().to_owned()));
                }
                Op::Sigmoid(a) => {
                    let y = &self.nodes[i].value;
                    contribs.push((*a, &g * &(y * &(1.0 - y))));
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[i].value;
                    contribs.push((*a, &g * &(1.0 - y * y)));
                }
                Op::Relu(a) => {
                    let mask = self.nodes[i].value.mapv(|y| if y > 0.0 { 1.0 } else { 0.0 });
                    contribs.push((*a, &g * &mask));
                }
                Op::SoftmaxRows(a) => {
                    let y = &self.nodes[i].value;
                    let mut ga = Array2::zeros(y.raw_dim());
                    for r in 0..y.nrows() {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let dot: f64 = yr.iter().zip(gr.iter()).map(|(y, g)| y * g).sum();
                        for c in 0..y.ncols() {
                            ga[(r, c)] = yr[c] * (gr[c] - dot);
                        }
                    }
                    contribs.push((*a, ga));
                }
                Op::LayerNormRows(a, stats) => {
                    let y = &self.nodes[i].value;
                    let d = y.ncols() as f64;
                    let mut ga = Array2::zeros(y.raw_dim());
                    for r in 0..y.nrows() {
                        let (_, inv_std) = stats[r];
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let mean_g: f64 = gr.sum() / d;
                        let mean_gy: f64 =
                            gr.iter().zip(yr.iter()).map(|(g, y)| g * y).sum::<f64>() / d;
                        for c in 0..y.ncols() {
                            ga[(r, c)] = inv_std * (gr[c] - mean_g - yr[c] * mean_gy);
                        }
                    }
                    contribs.push((*a, ga));
                }
                Op::SumAll(a) => {
                    let shape = self.nodes[a.0].value.raw_dim();
                    contribs.push((*a, Array2::from_elem(shape, g[(0, 0)])));
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let n = self.nodes[p.0].value.nrows();
                        contribs.push((p, g.slice(s![start..start + n, ..]).to_owned()));
                        start += n;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let n = self.nodes[p.0].value.ncols();
                        contribs.push((p, g.slice(s![.., start..start + n]).to_owned()));
                        start += n;
                    }
                }
                Op::SliceRows(a, start, len) => {
                    let mut ga = Array2::zeros(self.nodes[a.0].value.raw_dim());
                    ga.slice_mut(s![*start..*start + *len, ..]).assign(&g);
                    contribs.push((*a, ga));
                }
                Op::SoftmaxCrossEntropy(logits, target, probs) => {
                    let mut gl = probs.clone();
                    gl[(0, *target)] -= 1.0;
                    contribs.push((*logits, gl * g[(0, 0)]));
                }
                Op::BceWithLogits(logits, labels) => {
                    let x = &self.nodes[logits.0].value;
                    let n = x.nrows() as f64;
                    let gl = (x.mapv(stable_sigmoid) - labels) * (g[(0, 0)] / n);
                    contribs.push((*logits, gl));
                }
            }
            for (id, ga) in contribs.drain(..) {
                self.accum(id, ga);
            }
        }
    }

    fn accum(&mut self, id: NodeId, g: Array2<f64>) {
        match &mut self.nodes[id.0].grad {
            Some(existing) => *existing += &g,
            slot @ None => *slot = Some(g),
        }
    }
}

/// Numerically stable logistic function.
pub fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
