//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Graph`] records operations in creation order while borrowing the
//! [`ParamStore`] immutably. [`Graph::backward`] walks the tape in reverse
//! and adds parameter gradients into a [`Grads`] buffer, so gradients from
//! several graphs (one per sequence in a batch) accumulate naturally.

use glossbench_core::SplitMix64;

use crate::tensor::{matmul_acc, matmul_at_acc, matmul_bt_acc, Tensor};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ShapeError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Mismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{op}: {detail}")]
    Invalid { op: &'static str, detail: String },
}

pub type Result<T, E = ShapeError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

/// Named trainable parameters in declaration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            value,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&self) -> Grads {
        Grads(self.params.iter().map(|p| vec![0.0; p.value.len()]).collect())
    }

    /// Replaces all values, keeping names and shapes.
    pub fn load_values(&mut self, values: &[Vec<f64>]) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(ShapeError::Invalid {
                op: "load_values",
                detail: format!("{} blocks for {} parameters", values.len(), self.params.len()),
            });
        }
        for (p, v) in self.params.iter_mut().zip(values) {
            if p.value.len() != v.len() {
                return Err(ShapeError::Invalid {
                    op: "load_values",
                    detail: format!("parameter {} expects {} values, got {}", p.name, p.value.len(), v.len()),
                });
            }
            p.value.data.copy_from_slice(v);
        }
        Ok(())
    }
}

/// Gradient buffers, one per parameter, in store order.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads(pub Vec<Vec<f64>>);

impl Grads {
    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.0[id.0]
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.0 {
            for x in g.iter_mut() {
                *x *= factor;
            }
        }
    }

    pub fn zero(&mut self) {
        for g in &mut self.0 {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    MatMulBt(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Relu(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Softmax(NodeId),
    LayerNorm { x: NodeId, inv_std: Vec<f64> },
    Gather { table: NodeId, ids: Vec<usize> },
    SumRows(NodeId),
    SliceCols { x: NodeId, start: usize },
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    Dropout { x: NodeId, mask: Vec<f64> },
    CrossEntropy {
        logits: NodeId,
        targets: Vec<usize>,
        weights: Vec<f64>,
        smoothing: f64,
        probs: Vec<f64>,
    },
    Mse { pred: NodeId, target: Vec<f64> },
}

#[derive(Debug)]
enum Value {
    Owned(Tensor),
    Param(ParamId),
}

#[derive(Debug)]
struct Node {
    value: Value,
    op: Op,
    needs_grad: bool,
}

pub const LAYER_NORM_EPS: f64 = 1e-9;

/// Broadcast pattern of a binary op's right operand.
#[derive(Clone, Copy)]
enum Bcast {
    Same,
    Row,
    Col,
    Scalar,
}

pub struct Graph<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    dropout_rng: Option<SplitMix64>,
}

impl<'s> Graph<'s> {
    /// Inference graph: dropout is the identity.
    pub fn new(store: &'s ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            dropout_rng: None,
        }
    }

    /// Training graph: dropout draws masks from `rng`.
    pub fn training(store: &'s ParamStore, rng: SplitMix64) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            dropout_rng: Some(rng),
        }
    }

    pub fn is_training(&self) -> bool {
        self.dropout_rng.is_some()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        match &self.nodes[id.0].value {
            Value::Owned(t) => t,
            Value::Param(p) => &self.store.get(*p).value,
        }
    }

    pub fn dims(&self, id: NodeId) -> (usize, usize) {
        self.value(id).dims()
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.value(id).data[0]
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Param(id),
            needs_grad: true,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let ((n, k), (k2, m)) = (self.dims(a), self.dims(b));
        if k != k2 {
            return Err(ShapeError::Mismatch {
                op: "matmul",
                left: (n, k),
                right: (k2, m),
            });
        }
        let mut out = vec![0.0; n * m];
        matmul_acc(&self.value(a).data, &self.value(b).data, &mut out, n, k, m);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::matrix(n, m, out), Op::MatMul(a, b), ng))
    }

    /// `a * b^T`.
    pub fn matmul_bt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let ((n, k), (m, k2)) = (self.dims(a), self.dims(b));
        if k != k2 {
            return Err(ShapeError::Mismatch {
                op: "matmul_bt",
                left: (n, k),
                right: (m, k2),
            });
        }
        let mut out = vec![0.0; n * m];
        matmul_bt_acc(&self.value(a).data, &self.value(b).data, &mut out, n, k, m);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::matrix(n, m, out), Op::MatMulBt(a, b), ng))
    }

    fn bcast(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<Bcast> {
        let ((ra, ca), (rb, cb)) = (self.dims(a), self.dims(b));
        if (ra, ca) == (rb, cb) {
            Ok(Bcast::Same)
        } else if (rb, cb) == (1, 1) {
            Ok(Bcast::Scalar)
        } else if rb == 1 && cb == ca {
            Ok(Bcast::Row)
        } else if cb == 1 && rb == ra {
            Ok(Bcast::Col)
        } else {
            Err(ShapeError::Mismatch {
                op,
                left: (ra, ca),
                right: (rb, cb),
            })
        }
    }

    fn binary(&mut self, op: &'static str, a: NodeId, b: NodeId, f: fn(f64, f64) -> f64) -> Result<(Tensor, Bcast)> {
        let mode = self.bcast(op, a, b)?;
        let (ra, ca) = self.dims(a);
        let (av, bv) = (&self.value(a).data, &self.value(b).data);
        let data: Vec<f64> = (0..ra * ca)
            .map(|idx| {
                let y = match mode {
                    Bcast::Same => bv[idx],
                    Bcast::Row => bv[idx % ca],
                    Bcast::Col => bv[idx / ca],
                    Bcast::Scalar => bv[0],
                };
                f(av[idx], y)
            })
            .collect();
        Ok((Tensor::matrix(ra, ca, data), mode))
    }

    /// Elementwise sum; `b` may broadcast as a row, a column, or a scalar.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (t, _) = self.binary("add", a, b, |x, y| x + y)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Add(a, b), ng))
    }

    /// Elementwise product with the same broadcasting as [`add`](Self::add).
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (t, _) = self.binary("mul", a, b, |x, y| x * y)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let v = self.value(a);
        let t = Tensor::matrix(v.rows(), v.cols(), v.data.iter().map(|x| x * factor).collect());
        let ng = self.needs(a);
        self.push(t, Op::Scale(a, factor), ng)
    }

    fn unary(&mut self, a: NodeId, op: Op, f: impl Fn(f64) -> f64) -> NodeId {
        let v = self.value(a);
        let t = Tensor::matrix(v.rows(), v.cols(), v.data.iter().map(|&x| f(x)).collect());
        let ng = self.needs(a);
        self.push(t, op, ng)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(a, Op::Sigmoid(a), |x| 1.0 / (1.0 + (-x).exp()))
    }

    /// Row-wise softmax. With `causal`, entry `(i, j)` for `j > i` is
    /// treated as `-inf` and comes out exactly 0.
    pub fn softmax_rows(&mut self, a: NodeId, causal: bool) -> NodeId {
        let v = self.value(a);
        let (r, c) = v.dims();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = v.row_slice(i);
            let limit = if causal { (i + 1).min(c) } else { c };
            let max = row[..limit].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for j in 0..limit {
                let e = (row[j] - max).exp();
                out[i * c + j] = e;
                total += e;
            }
            for x in &mut out[i * c..i * c + limit] {
                *x /= total;
            }
        }
        let ng = self.needs(a);
        self.push(Tensor::matrix(r, c, out), Op::Softmax(a), ng)
    }

    /// Per-row standardization to mean 0 and variance 1 (no affine).
    pub fn layer_norm_rows(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let (r, c) = v.dims();
        let mut out = vec![0.0; r * c];
        let mut inv_std = Vec::with_capacity(r);
        for i in 0..r {
            let row = v.row_slice(i);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for j in 0..c {
                out[i * c + j] = (row[j] - mean) * is;
            }
            inv_std.push(is);
        }
        let ng = self.needs(a);
        self.push(Tensor::matrix(r, c, out), Op::LayerNorm { x: a, inv_std }, ng)
    }

    /// Rows `ids` of `table`.
    pub fn gather(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let v = self.value(table);
        let (r, c) = v.dims();
        if let Some(&bad) = ids.iter().find(|&&i| i >= r) {
            return Err(ShapeError::Invalid {
                op: "gather",
                detail: format!("row {bad} out of range for table with {r} rows"),
            });
        }
        let mut out = Vec::with_capacity(ids.len() * c);
        for &i in ids {
            out.extend_from_slice(v.row_slice(i));
        }
        let ng = self.needs(table);
        Ok(self.push(
            Tensor::matrix(ids.len(), c, out),
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            ng,
        ))
    }

    /// Column sums as a `1 x cols` row.
    pub fn sum_rows(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let (r, c) = v.dims();
        let mut out = vec![0.0; c];
        for i in 0..r {
            for (o, x) in out.iter_mut().zip(v.row_slice(i)) {
                *o += x;
            }
        }
        let ng = self.needs(a);
        self.push(Tensor::row(out), Op::SumRows(a), ng)
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let v = self.value(a);
        let (r, c) = v.dims();
        if start + len > c {
            return Err(ShapeError::Invalid {
                op: "slice_cols",
                detail: format!("columns {start}..{} out of range for width {c}", start + len),
            });
        }
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&v.row_slice(i)[start..start + len]);
        }
        let ng = self.needs(a);
        Ok(self.push(Tensor::matrix(r, len, out), Op::SliceCols { x: a, start }, ng))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let r = self.dims(parts[0]).0;
        for &p in parts {
            if self.dims(p).0 != r {
                return Err(ShapeError::Mismatch {
                    op: "concat_cols",
                    left: self.dims(parts[0]),
                    right: self.dims(p),
                });
            }
        }
        let total: usize = parts.iter().map(|&p| self.dims(p).1).sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                out.extend_from_slice(self.value(p).row_slice(i));
            }
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(Tensor::matrix(r, total, out), Op::ConcatCols(parts.to_vec()), ng))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let c = self.dims(parts[0]).1;
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (r, pc) = self.dims(p);
            if pc != c {
                return Err(ShapeError::Mismatch {
                    op: "concat_rows",
                    left: self.dims(parts[0]),
                    right: (r, pc),
                });
            }
            out.extend_from_slice(&self.value(p).data);
            rows += r;
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(Tensor::matrix(rows, c, out), Op::ConcatRows(parts.to_vec()), ng))
    }

    /// Inverted dropout; identity on inference graphs or when `rate == 0`.
    pub fn dropout(&mut self, a: NodeId, rate: f64) -> NodeId {
        if rate <= 0.0 {
            return a;
        }
        let Some(rng) = self.dropout_rng.as_mut() else {
            return a;
        };
        let keep = 1.0 - rate;
        let n = self.nodes[a.0].value_len(self.store);
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.next_f64() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let v = self.value(a);
        let t = Tensor::matrix(v.rows(), v.cols(), v.data.iter().zip(&mask).map(|(x, m)| x * m).collect());
        let ng = self.needs(a);
        self.push(t, Op::Dropout { x: a, mask }, ng)
    }

    /// Weighted mean over rows of label-smoothed cross-entropy. Row `t` has
    /// target distribution `(1 - smoothing) * onehot(targets[t]) + smoothing / V`.
    pub fn cross_entropy(
        &mut self,
        logits: NodeId,
        targets: &[usize],
        weights: Option<&[f64]>,
        smoothing: f64,
    ) -> Result<NodeId> {
        let v = self.value(logits);
        let (r, c) = v.dims();
        if targets.len() != r || weights.is_some_and(|w| w.len() != r) {
            return Err(ShapeError::Invalid {
                op: "cross_entropy",
                detail: format!("{} targets for {r} rows", targets.len()),
            });
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
            return Err(ShapeError::Invalid {
                op: "cross_entropy",
                detail: format!("target {bad} out of range for {c} classes"),
            });
        }
        let weights = weights.map_or_else(|| vec![1.0; r], <[f64]>::to_vec);
        let total_w: f64 = weights.iter().sum();
        let mut probs = vec![0.0; r * c];
        let mut loss = 0.0;
        for i in 0..r {
            let row = v.row_slice(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            let mut row_loss = 0.0;
            for j in 0..c {
                let logp = row[j] - lse;
                probs[i * c + j] = logp.exp();
                let q = smoothing / c as f64 + if j == targets[i] { 1.0 - smoothing } else { 0.0 };
                row_loss -= q * logp;
            }
            loss += weights[i] * row_loss;
        }
        let loss = if total_w > 0.0 { loss / total_w } else { 0.0 };
        let ng = self.needs(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                weights,
                smoothing,
                probs,
            },
            ng,
        ))
    }

    /// Mean squared error against a constant target.
    pub fn mse(&mut self, pred: NodeId, target: &[f64]) -> Result<NodeId> {
        let v = self.value(pred);
        if v.len() != target.len() {
            return Err(ShapeError::Mismatch {
                op: "mse",
                left: v.dims(),
                right: (1, target.len()),
            });
        }
        let n = target.len().max(1) as f64;
        let loss = v.data.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
        let ng = self.needs(pred);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Mse {
                pred,
                target: target.to_vec(),
            },
            ng,
        ))
    }

    /// Accumulates `d loss / d param` into `grads`. `loss` must be `1 x 1`.
    pub fn backward(&self, loss: NodeId, grads: &mut Grads) {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        let mut adj: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(dy) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let out = self.value(NodeId(idx));
            let (r, c) = out.dims();
            match &node.op {
                Op::Leaf => {}
                Op::Param(p) => {
                    for (g, d) in grads.0[p.0].iter_mut().zip(&dy) {
                        *g += d;
                    }
                }
                Op::MatMul(a, b) => {
                    let (n, k) = self.dims(*a);
                    let m = c;
                    if self.needs(*a) {
                        let mut da = vec![0.0; n * k];
                        matmul_bt_acc(&dy, &self.value(*b).data, &mut da, n, m, k);
                        accumulate(&mut adj, *a, da);
                    }
                    if self.needs(*b) {
                        let mut db = vec![0.0; k * m];
                        matmul_at_acc(&self.value(*a).data, &dy, &mut db, n, k, m);
                        accumulate(&mut adj, *b, db);
                    }
                }
                Op::MatMulBt(a, b) => {
                    // out (n x m) = a (n x k) * b^T, b is m x k
                    let (n, k) = self.dims(*a);
                    let m = c;
                    if self.needs(*a) {
                        let mut da = vec![0.0; n * k];
                        matmul_acc(&dy, &self.value(*b).data, &mut da, n, m, k);
                        accumulate(&mut adj, *a, da);
                    }
                    if self.needs(*b) {
                        let mut db = vec![0.0; m * k];
                        matmul_at_acc(&dy, &self.value(*a).data, &mut db, n, m, k);
                        accumulate(&mut adj, *b, db);
                    }
                }
                Op::Add(a, b) | Op::Mul(a, b) => {
                    let is_mul = matches!(node.op, Op::Mul(..));
                    let mode = self.bcast("backward", *a, *b).expect("checked in forward");
                    let (av, bv) = (&self.value(*a).data, &self.value(*b).data);
                    let b_index = |i: usize| match mode {
                        Bcast::Same => i,
                        Bcast::Row => i % c,
                        Bcast::Col => i / c,
                        Bcast::Scalar => 0,
                    };
                    if self.needs(*a) {
                        let da = if is_mul {
                            dy.iter().enumerate().map(|(i, d)| d * bv[b_index(i)]).collect()
                        } else {
                            dy.clone()
                        };
                        accumulate(&mut adj, *a, da);
                    }
                    if self.needs(*b) {
                        let mut db = vec![0.0; bv.len()];
                        for (i, d) in dy.iter().enumerate() {
                            db[b_index(i)] += if is_mul { d * av[i] } else { *d };
                        }
                        accumulate(&mut adj, *b, db);
                    }
                }
                Op::Scale(a, f) => {
                    accumulate(&mut adj, *a, dy.iter().map(|d| d * f).collect());
                }
                Op::Relu(a) => {
                    let x = &self.value(*a).data;
                    let da = dy.iter().zip(x).map(|(d, &x)| if x > 0.0 { *d } else { 0.0 }).collect();
                    accumulate(&mut adj, *a, da);
                }
                Op::Tanh(a) => {
                    let da = dy.iter().zip(&out.data).map(|(d, y)| d * (1.0 - y * y)).collect();
                    accumulate(&mut adj, *a, da);
                }
                Op::Sigmoid(a) => {
                    let da = dy.iter().zip(&out.data).map(|(d, y)| d * y * (1.0 - y)).collect();
                    accumulate(&mut adj, *a, da);
                }
                Op::Softmax(a) => {
                    let y = &out.data;
                    let mut da = vec![0.0; r * c];
                    for i in 0..r {
                        let s = i * c;
                        let dot: f64 = (0..c).map(|j| dy[s + j] * y[s + j]).sum();
                        for j in 0..c {
                            da[s + j] = y[s + j] * (dy[s + j] - dot);
                        }
                    }
                    accumulate(&mut adj, *a, da);
                }
                Op::LayerNorm { x, inv_std } => {
                    let y = &out.data;
                    let mut da = vec![0.0; r * c];
                    for i in 0..r {
                        let s = i * c;
                        let mean_dy: f64 = dy[s..s + c].iter().sum::<f64>() / c as f64;
                        let mean_dyy: f64 = (0..c).map(|j| dy[s + j] * y[s + j]).sum::<f64>() / c as f64;
                        for j in 0..c {
                            da[s + j] = inv_std[i] * (dy[s + j] - mean_dy - y[s + j] * mean_dyy);
                        }
                    }
                    accumulate(&mut adj, *x, da);
                }
                Op::Gather { table, ids } => {
                    let (tr, tc) = self.dims(*table);
                    let mut dt = vec![0.0; tr * tc];
                    for (k, &row) in ids.iter().enumerate() {
                        for j in 0..tc {
                            dt[row * tc + j] += dy[k * tc + j];
                        }
                    }
                    accumulate(&mut adj, *table, dt);
                }
                Op::SumRows(a) => {
                    let (ar, ac) = self.dims(*a);
                    let da = (0..ar * ac).map(|i| dy[i % ac]).collect();
                    accumulate(&mut adj, *a, da);
                }
                Op::SliceCols { x, start } => {
                    let (xr, xc) = self.dims(*x);
                    let mut dx = vec![0.0; xr * xc];
                    for i in 0..xr {
                        dx[i * xc + start..i * xc + start + c].copy_from_slice(&dy[i * c..(i + 1) * c]);
                    }
                    accumulate(&mut adj, *x, dx);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let pc = self.dims(p).1;
                        if self.needs(p) {
                            let mut dp = Vec::with_capacity(r * pc);
                            for i in 0..r {
                                dp.extend_from_slice(&dy[i * c + offset..i * c + offset + pc]);
                            }
                            accumulate(&mut adj, p, dp);
                        }
                        offset += pc;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = self.value(p).len();
                        if self.needs(p) {
                            accumulate(&mut adj, p, dy[offset..offset + len].to_vec());
                        }
                        offset += len;
                    }
                }
                Op::Dropout { x, mask } => {
                    accumulate(&mut adj, *x, dy.iter().zip(mask).map(|(d, m)| d * m).collect());
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    weights,
                    smoothing,
                    probs,
                } => {
                    let (lr, lc) = self.dims(*logits);
                    let total_w: f64 = weights.iter().sum();
                    let mut dl = vec![0.0; lr * lc];
                    if total_w > 0.0 {
                        for i in 0..lr {
                            let scale = dy[0] * weights[i] / total_w;
                            for j in 0..lc {
                                let q = smoothing / lc as f64 + if j == targets[i] { 1.0 - smoothing } else { 0.0 };
                                dl[i * lc + j] = scale * (probs[i * lc + j] - q);
                            }
                        }
                    }
                    accumulate(&mut adj, *logits, dl);
                }
                Op::Mse { pred, target } => {
                    let p = &self.value(*pred).data;
                    let n = target.len().max(1) as f64;
                    let dp = p.iter().zip(target).map(|(p, t)| dy[0] * 2.0 * (p - t) / n).collect();
                    accumulate(&mut adj, *pred, dp);
                }
            }
        }
    }
}

impl Node {
    fn value_len(&self, store: &ParamStore) -> usize {
        match &self.value {
            Value::Owned(t) => t.len(),
            Value::Param(p) => store.get(*p).value.len(),
        }
    }
}

fn accumulate(adj: &mut [Option<Vec<f64>>], id: NodeId, delta: Vec<f64>) {
    match &mut adj[id.0] {
        Some(existing) => {
            for (e, d) in existing.iter_mut().zip(delta) {
                *e += d;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}
