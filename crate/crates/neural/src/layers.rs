//! Layers built from graph operations. Each layer owns [`ParamId`]s into a
//! shared [`ParamStore`]; forward passes take the graph explicitly.

use glossbench_core::SplitMix64;

use crate::graph::{Graph, NodeId, ParamId, ParamStore, Result, ShapeError};
use crate::tensor::Tensor;

fn xavier(rng: &mut SplitMix64, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::matrix(
        fan_in,
        fan_out,
        (0..fan_in * fan_out).map(|_| rng.uniform(-bound, bound)).collect(),
    )
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, rng: &mut SplitMix64, name: &str, in_dim: usize, out_dim: usize, bias: bool) -> Self {
        let weight = store.add(format!("{name}.weight"), xavier(rng, in_dim, out_dim));
        let bias = bias.then(|| store.add(format!("{name}.bias"), Tensor::zeros(vec![1, out_dim])));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let w = g.param(self.weight);
        let y = g.matmul(x, w)?;
        match self.bias {
            Some(b) => {
                let b = g.param(b);
                g.add(y, b)
            }
            None => Ok(y),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: ParamId,
    pub vocab: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new(store: &mut ParamStore, rng: &mut SplitMix64, name: &str, vocab: usize, dim: usize) -> Self {
        let scale = 1.0 / (dim as f64).sqrt();
        let table = Tensor::matrix(vocab, dim, (0..vocab * dim).map(|_| rng.normal() * scale).collect());
        Self {
            table: store.add(format!("{name}.table"), table),
            vocab,
            dim,
        }
    }

    pub fn forward(&self, g: &mut Graph, ids: &[usize]) -> Result<NodeId> {
        let t = g.param(self.table);
        g.gather(t, ids)
    }
}

/// Row standardization followed by a learned per-column gain and shift.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub shift: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gain: store.add(format!("{name}.gain"), Tensor::row(vec![1.0; dim])),
            shift: store.add(format!("{name}.shift"), Tensor::zeros(vec![1, dim])),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let n = g.layer_norm_rows(x);
        let gain = g.param(self.gain);
        let shift = g.param(self.shift);
        let y = g.mul(n, gain)?;
        g.add(y, shift)
    }
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
    pub d_model: usize,
}

/// Attention output plus the per-head weight matrices.
pub struct AttentionOutput {
    pub output: NodeId,
    pub weights: Vec<NodeId>,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, rng: &mut SplitMix64, name: &str, d_model: usize, heads: usize) -> Result<Self> {
        if heads == 0 || d_model % heads != 0 {
            return Err(ShapeError::Invalid {
                op: "attention",
                detail: format!("{heads} heads do not divide d_model {d_model}"),
            });
        }
        Ok(Self {
            query: Linear::new(store, rng, &format!("{name}.query"), d_model, d_model, true),
            key: Linear::new(store, rng, &format!("{name}.key"), d_model, d_model, true),
            value: Linear::new(store, rng, &format!("{name}.value"), d_model, d_model, true),
            output: Linear::new(store, rng, &format!("{name}.output"), d_model, d_model, true),
            heads,
            d_model,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: NodeId, causal: bool) -> Result<NodeId> {
        Ok(self.forward_with_weights(g, x, causal)?.output)
    }

    pub fn forward_with_weights(&self, g: &mut Graph, x: NodeId, causal: bool) -> Result<AttentionOutput> {
        let q = self.query.forward(g, x)?;
        let k = self.key.forward(g, x)?;
        let v = self.value.forward(g, x)?;
        let dh = self.d_model / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = g.slice_cols(q, h * dh, dh)?;
            let kh = g.slice_cols(k, h * dh, dh)?;
            let vh = g.slice_cols(v, h * dh, dh)?;
            let scores = g.matmul_bt(qh, kh)?;
            let scores = g.scale(scores, scale);
            let w = g.softmax_rows(scores, causal);
            outs.push(g.matmul(w, vh)?);
            weights.push(w);
        }
        let joined = if outs.len() == 1 { outs[0] } else { g.concat_cols(&outs)? };
        Ok(AttentionOutput {
            output: self.output.forward(g, joined)?,
            weights,
        })
    }
}

#[derive(Debug, Clone)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}

impl FeedForward {
    pub fn new(store: &mut ParamStore, rng: &mut SplitMix64, name: &str, d_model: usize, hidden: usize) -> Self {
        Self {
            inner: Linear::new(store, rng, &format!("{name}.inner"), d_model, hidden, true),
            outer: Linear::new(store, rng, &format!("{name}.outer"), hidden, d_model, true),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let h = self.inner.forward(g, x)?;
        let h = g.relu(h);
        self.outer.forward(g, h)
    }
}

/// Sinusoidal position table, `len x dim`.
pub fn positional_encoding(len: usize, dim: usize) -> Tensor {
    let mut data = vec![0.0; len * dim];
    for pos in 0..len {
        for i in 0..dim {
            let exponent = (2 * (i / 2)) as f64 / dim as f64;
            let angle = pos as f64 / 10000f64.powf(exponent);
            data[pos * dim + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::matrix(len, dim, data)
}

/// Post-norm Transformer encoder layer; dropout sits on each sublayer
/// output before the residual sum.
#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub attention: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub ff: FeedForward,
    pub norm2: LayerNorm,
}

impl EncoderLayer {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut SplitMix64,
        name: &str,
        d_model: usize,
        heads: usize,
        ff_dim: usize,
    ) -> Result<Self> {
        Ok(Self {
            attention: MultiHeadAttention::new(store, rng, &format!("{name}.attention"), d_model, heads)?,
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), d_model),
            ff: FeedForward::new(store, rng, &format!("{name}.ff"), d_model, ff_dim),
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), d_model),
        })
    }

    pub fn forward(&self, g: &mut Graph, x: NodeId, causal: bool, dropout: f64) -> Result<NodeId> {
        let a = self.attention.forward(g, x, causal)?;
        let a = g.dropout(a, dropout);
        let x = g.add(x, a)?;
        let x = self.norm1.forward(g, x)?;
        let f = self.ff.forward(g, x)?;
        let f = g.dropout(f, dropout);
        let x = g.add(x, f)?;
        self.norm2.forward(g, x)
    }
}

/// A stack of encoder layers sharing one configuration.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub layers: Vec<EncoderLayer>,
}

impl Encoder {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut SplitMix64,
        name: &str,
        layers: usize,
        d_model: usize,
        heads: usize,
        ff_dim: usize,
    ) -> Result<Self> {
        let layers = (0..layers)
            .map(|i| EncoderLayer::new(store, rng, &format!("{name}.{i}"), d_model, heads, ff_dim))
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn forward(&self, g: &mut Graph, mut x: NodeId, causal: bool, dropout: f64) -> Result<NodeId> {
        for layer in &self.layers {
            x = layer.forward(g, x, causal, dropout)?;
        }
        Ok(x)
    }
}

/// LSTM cell over a batch of rows. Gate order in the fused weights is
/// input, forget, candidate, output.
#[derive(Debug, Clone)]
pub struct LstmCell {
    pub input: Linear,
    pub recurrent: ParamId,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(store: &mut ParamStore, rng: &mut SplitMix64, name: &str, in_dim: usize, hidden: usize) -> Self {
        let input = Linear::new(store, rng, &format!("{name}.input"), in_dim, 4 * hidden, true);
        if let Some(b) = input.bias {
            // forget-gate bias of 1
            let v = store.value_mut(b);
            v.data[hidden..2 * hidden].iter_mut().for_each(|x| *x = 1.0);
        }
        let recurrent = store.add(format!("{name}.recurrent"), xavier(rng, hidden, 4 * hidden));
        Self {
            input,
            recurrent,
            hidden,
        }
    }

    /// One step: returns the new `(h, c)`.
    pub fn step(&self, g: &mut Graph, x: NodeId, h: NodeId, c: NodeId) -> Result<(NodeId, NodeId)> {
        let hd = self.hidden;
        let xi = self.input.forward(g, x)?;
        let r = g.param(self.recurrent);
        let hr = g.matmul(h, r)?;
        let z = g.add(xi, hr)?;
        let zi = g.slice_cols(z, 0, hd)?;
        let zf = g.slice_cols(z, hd, hd)?;
        let zg = g.slice_cols(z, 2 * hd, hd)?;
        let zo = g.slice_cols(z, 3 * hd, hd)?;
        let i = g.sigmoid(zi);
        let f = g.sigmoid(zf);
        let cand = g.tanh(zg);
        let o = g.sigmoid(zo);
        let keep = g.mul(f, c)?;
        let write = g.mul(i, cand)?;
        let c = g.add(keep, write)?;
        let tc = g.tanh(c);
        let h = g.mul(o, tc)?;
        Ok((h, c))
    }
}
