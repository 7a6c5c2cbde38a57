//! Datasets, subword tokenization, optimal transport, and the scoring
//! metrics for the definition modeling and reverse dictionary tracks.

pub mod dataset;
pub mod metrics;
pub mod ot;
pub mod rng;
pub mod tokenizer;

pub use dataset::{ArchTag, DataPoint, Dataset, Pos};
pub use rng::SplitMix64;
pub use tokenizer::SubwordVocab;
