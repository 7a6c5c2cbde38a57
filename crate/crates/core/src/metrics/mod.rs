//! Scoring metrics for both tracks.

pub mod bleu;
pub mod mover;
pub mod revdict;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("batch sizes differ: {preds} predictions vs {targets} targets")]
    CountMismatch { preds: usize, targets: usize },
    #[error("ranking needs at least one item")]
    EmptyBatch,
    #[error("batch data has {len} values, not a multiple of dimension {dim}")]
    Ragged { len: usize, dim: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("reference gloss is empty")]
    EmptyReference,
    #[error("reference group is empty")]
    EmptyGroup,
    #[error("max_order must be at least 1")]
    BadOrder,
    #[error("token \"{0}\" has no embedding")]
    OutOfVocabulary(String),
    #[error("embedding table entries have inconsistent dimensions ({0} and {1})")]
    TableDim(usize, usize),
    #[error(transparent)]
    Transport(#[from] crate::ot::OtError),
}

pub type Result<T, E = MetricError> = std::result::Result<T, E>;

/// Whitespace tokenization used for gloss scoring (case-sensitive).
pub fn tokenize_gloss(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}
