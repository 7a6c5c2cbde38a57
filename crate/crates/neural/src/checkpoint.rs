//! Binary checkpoint format: an 8-byte magic, the header length as a
//! little-endian u64, a JSON header, then every parameter block as
//! little-endian f64 values in declaration order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::graph::ParamStore;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"GBCKPT01";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("not a checkpoint file (bad magic)")]
    Magic,
    #[error("checkpoint kind {found:?}, expected {expected:?}")]
    Kind { expected: String, found: String },
    #[error("checkpoint does not match the model: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub params: Vec<ParamInfo>,
    /// Tokenizer (or character vocabulary) the model was trained with.
    #[serde(default)]
    pub vocab: serde_json::Value,
    #[serde(default)]
    pub extra: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub blocks: Vec<Vec<f64>>,
}

impl Checkpoint {
    pub fn from_store(
        kind: &str,
        config: serde_json::Value,
        seed: u64,
        vocab: serde_json::Value,
        store: &ParamStore,
    ) -> Self {
        let params = store
            .iter()
            .map(|(_, p)| ParamInfo {
                name: p.name.clone(),
                shape: p.value.shape.clone(),
            })
            .collect();
        Self {
            header: CheckpointHeader {
                kind: kind.to_string(),
                config,
                seed,
                params,
                vocab,
                extra: serde_json::Value::Null,
            },
            blocks: store.iter().map(|(_, p)| p.value.data.clone()).collect(),
        }
    }

    /// Copies the blocks into `store`, which must declare the same names and shapes.
    pub fn restore_into(&self, store: &mut ParamStore) -> Result<(), CheckpointError> {
        if store.len() != self.header.params.len() {
            return Err(CheckpointError::Mismatch(format!(
                "{} parameters in file, {} in model",
                self.header.params.len(),
                store.len()
            )));
        }
        for ((_, p), info) in store.iter().zip(&self.header.params) {
            if p.name != info.name || p.value.shape != info.shape {
                return Err(CheckpointError::Mismatch(format!(
                    "{} {:?} in file, {} {:?} in model",
                    info.name, info.shape, p.name, p.value.shape
                )));
            }
        }
        store
            .load_values(&self.blocks)
            .map_err(|e| CheckpointError::Mismatch(e.to_string()))
    }

    pub fn expect_kind(&self, kind: &str) -> Result<(), CheckpointError> {
        if self.header.kind == kind {
            Ok(())
        } else {
            Err(CheckpointError::Kind {
                expected: kind.into(),
                found: self.header.kind.clone(),
            })
        }
    }

    pub fn tensors(&self) -> impl Iterator<Item = (&str, Tensor)> + '_ {
        self.header
            .params
            .iter()
            .zip(&self.blocks)
            .map(|(info, b)| (info.name.as_str(), Tensor::new(info.shape.clone(), b.clone())))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let n: usize = self.blocks.iter().map(Vec::len).sum();
        let mut out = Vec::with_capacity(16 + header.len() + 8 * n);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for x in self.blocks.iter().flatten() {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::Magic);
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        if len > r.len() {
            return Err(CheckpointError::Mismatch("truncated header".into()));
        }
        let header: CheckpointHeader = serde_json::from_slice(&r[..len])?;
        r = &r[len..];
        let mut blocks = Vec::with_capacity(header.params.len());
        for info in &header.params {
            let n: usize = info.shape.iter().product();
            let mut block = Vec::with_capacity(n);
            for _ in 0..n {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                block.push(f64::from_le_bytes(b));
            }
            blocks.push(block);
        }
        if !r.is_empty() {
            return Err(CheckpointError::Mismatch(format!("{} trailing bytes", r.len())));
        }
        Ok(Self { header, blocks })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_round_trip() {
        let mut store = ParamStore::new();
        store.add("a", Tensor::matrix(2, 2, vec![1.0, -0.0, f64::MIN_POSITIVE, 3.5]));
        store.add("b", Tensor::row(vec![0.1]));
        let ck = Checkpoint::from_store("test", serde_json::json!({"x": 1}), 7, serde_json::Value::Null, &store);
        let bytes = ck.to_bytes();
        assert_eq!(&bytes[..8], MAGIC);
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        let mut other = store.clone();
        other.value_mut(crate::graph::ParamId(0)).data[0] = 9.0;
        back.restore_into(&mut other).unwrap();
        assert_eq!(other, store);
        assert!(Checkpoint::from_bytes(b"nonsense-bytes").is_err());
    }
}
