//! Reverse-dictionary metrics: MSE, cosine, and the cosine ranking measure.
//!
//! The ranking of prediction `p_i` is the fraction of test targets `t_j`
//! (including `t_i` itself) with `cos(p_i, t_j) > cos(p_i, t_i)`, so it lies
//! in `[0, (n-1)/n]` and 0 is best.

use serde::{Deserialize, Serialize};

use super::{mean, MetricError, Result};

/// `n` row vectors of equal dimension, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorBatch {
    dim: usize,
    data: Vec<f64>,
}

impl VectorBatch {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(MetricError::Ragged {
                len: data.len(),
                dim,
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(MetricError::NonFinite("vector batch"));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(MetricError::DimMismatch {
                    left: dim,
                    right: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        if rows.is_empty() {
            return Ok(Self { dim: 1, data });
        }
        Self::new(dim, data)
    }

    pub fn n(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

fn check_dims(p: &[f64], t: &[f64]) -> Result<()> {
    if p.len() != t.len() {
        return Err(MetricError::DimMismatch {
            left: p.len(),
            right: t.len(),
        });
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn cosine_with_norms(p: &[f64], t: &[f64], p_norm: f64, t_norm: f64) -> f64 {
    if p_norm == 0.0 || t_norm == 0.0 {
        0.0
    } else {
        dot(p, t) / (p_norm * t_norm)
    }
}

/// Mean squared difference of components.
pub fn mse(p: &[f64], t: &[f64]) -> Result<f64> {
    check_dims(p, t)?;
    if p.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = p.iter().zip(t).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / p.len() as f64)
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(p: &[f64], t: &[f64]) -> Result<f64> {
    check_dims(p, t)?;
    Ok(cosine_with_norms(p, t, norm(p), norm(t)))
}

/// Per-item ranks, serial.
pub fn rank_metric(preds: &VectorBatch, targets: &VectorBatch) -> Result<Vec<f64>> {
    rank_metric_parallel(preds, targets, 1)
}

/// Per-item ranks with prediction rows split into `threads` contiguous
/// blocks. Each comparison is computed identically in every block, so the
/// result does not depend on `threads`.
pub fn rank_metric_parallel(
    preds: &VectorBatch,
    targets: &VectorBatch,
    threads: usize,
) -> Result<Vec<f64>> {
    let n = preds.n();
    if n != targets.n() {
        return Err(MetricError::CountMismatch {
            preds: n,
            targets: targets.n(),
        });
    }
    if n == 0 {
        return Err(MetricError::EmptyBatch);
    }
    check_dims(preds.row(0), targets.row(0))?;

    let target_norms: Vec<f64> = targets.rows().map(norm).collect();
    let mut ranks = vec![0.0; n];
    let block = n.div_ceil(threads.max(1));
    let rank_rows = |start: usize, out: &mut [f64]| {
        for (offset, slot) in out.iter_mut().enumerate() {
            let i = start + offset;
            let p = preds.row(i);
            let pn = norm(p);
            let own = cosine_with_norms(p, targets.row(i), pn, target_norms[i]);
            let closer = (0..n)
                .filter(|&j| cosine_with_norms(p, targets.row(j), pn, target_norms[j]) > own)
                .count();
            *slot = closer as f64 / n as f64;
        }
    };
    if threads <= 1 {
        rank_rows(0, &mut ranks);
    } else {
        std::thread::scope(|s| {
            for (k, chunk) in ranks.chunks_mut(block).enumerate() {
                let rank_rows = &rank_rows;
                s.spawn(move || rank_rows(k * block, chunk));
            }
        });
    }
    Ok(ranks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevdictScores {
    pub mse: Vec<f64>,
    pub cosine: Vec<f64>,
    pub rank: Vec<f64>,
    pub mean_mse: f64,
    pub mean_cosine: f64,
    pub mean_rank: f64,
    /// Indices of predictions with zero norm (their cosine is reported as 0).
    pub zero_norm_predictions: Vec<usize>,
}

/// All three metrics, aggregated by unweighted mean.
pub fn score_revdict(preds: &VectorBatch, targets: &VectorBatch, threads: usize) -> Result<RevdictScores> {
    let rank = rank_metric_parallel(preds, targets, threads)?;
    let mut mse_v = Vec::with_capacity(rank.len());
    let mut cos_v = Vec::with_capacity(rank.len());
    let mut zero = Vec::new();
    for (i, (p, t)) in preds.rows().zip(targets.rows()).enumerate() {
        mse_v.push(mse(p, t)?);
        cos_v.push(cosine(p, t)?);
        if norm(p) == 0.0 {
            zero.push(i);
        }
    }
    Ok(RevdictScores {
        mean_mse: mean(&mse_v),
        mean_cosine: mean(&cos_v),
        mean_rank: mean(&rank),
        mse: mse_v,
        cosine: cos_v,
        rank,
        zero_norm_predictions: zero,
    })
}
