//! Tensors, reverse-mode autodiff, the layers and optimizer the baseline
//! models need, the two baselines themselves, and the character autoencoder.

pub mod baselines;
pub mod char_ae;
pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod tensor;

pub use checkpoint::{Checkpoint, CheckpointError};
pub use graph::{Graph, Grads, NodeId, ParamId, ParamStore, ShapeError};
pub use optim::{lr_at, AdamW, EarlyStopping, LrSchedule, OptimizerConfig, StopVerdict};
pub use tensor::Tensor;
