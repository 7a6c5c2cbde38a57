//! Sentence-level BLEU with short-reference smoothing.
//!
//! For an order `k` with `#ref < k <= max_order` the reference has no
//! `k`-grams, so the clipped match count is replaced by the pseudocount
//! `min(1, 1 / ln #ref)` (1 when `#ref == 1`) over a denominator of
//! `max(1, hypothesis k-gram count)`. All other orders use the standard
//! clipped precision. A brevity penalty `exp(1 - r/c)` applies when the
//! hypothesis is shorter than the reference.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{MetricError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuConfig {
    pub max_order: usize,
    pub brevity_penalty: bool,
}

impl Default for BleuConfig {
    fn default() -> Self {
        Self {
            max_order: 4,
            brevity_penalty: true,
        }
    }
}

fn ngram_counts<'a>(tokens: &'a [&'a str], order: usize) -> HashMap<&'a [&'a str], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= order {
        for gram in tokens.windows(order) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Pseudocount for orders the reference is too short to contain.
pub fn smoothing_pseudocount(ref_len: usize) -> f64 {
    if ref_len <= 1 {
        1.0
    } else {
        (1.0 / (ref_len as f64).ln()).min(1.0)
    }
}

/// BLEU of `hyp` against a single reference.
pub fn sense_bleu(hyp: &[&str], reference: &[&str], cfg: BleuConfig) -> Result<f64> {
    if cfg.max_order == 0 {
        return Err(MetricError::BadOrder);
    }
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    if hyp.is_empty() {
        return Ok(0.0);
    }
    let ref_len = reference.len();
    let hyp_len = hyp.len();

    let mut log_sum = 0.0;
    for order in 1..=cfg.max_order {
        let hyp_total = (hyp_len + 1).saturating_sub(order);
        let precision = if ref_len < order {
            smoothing_pseudocount(ref_len) / hyp_total.max(1) as f64
        } else {
            if hyp_total == 0 {
                return Ok(0.0);
            }
            let ref_counts = ngram_counts(reference, order);
            let matched: usize = ngram_counts(hyp, order)
                .into_iter()
                .map(|(gram, c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
                .sum();
            if matched == 0 {
                return Ok(0.0);
            }
            matched as f64 / hyp_total as f64
        };
        log_sum += precision.ln();
    }
    let geo = (log_sum / cfg.max_order as f64).exp();
    let bp = if cfg.brevity_penalty && hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    Ok(geo * bp)
}

/// Best [`sense_bleu`] over every reference sharing the definiendum.
pub fn lemma_bleu<'a, I>(hyp: &[&str], refs: I, cfg: BleuConfig) -> Result<f64>
where
    I: IntoIterator<Item = &'a [&'a str]>,
{
    let mut best: Option<f64> = None;
    for r in refs {
        let s = sense_bleu(hyp, r, cfg)?;
        best = Some(best.map_or(s, |b| b.max(s)));
    }
    best.ok_or(MetricError::EmptyGroup)
}
