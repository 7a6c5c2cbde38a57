//! The two baseline Transformers: a reverse-dictionary encoder that sums its
//! hidden states into a vector, and a causal definition-modeling decoder
//! primed with the definiendum vector.

use serde::{Deserialize, Serialize};

use glossbench_core::tokenizer::{BOS, EOS};
use glossbench_core::{ArchTag, Dataset, SplitMix64, SubwordVocab};

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::graph::{Graph, NodeId, ParamStore, ShapeError};
use crate::layers::{positional_encoding, Embedding, Encoder, Linear};
use crate::optim::{lr_at, AdamW, EarlyStopping, LrSchedule, OptimError, OptimizerConfig, StopVerdict};
use crate::tensor::Tensor;

pub const REVDICT_KIND: &str = "revdict";
pub const DEFMOD_KIND: &str = "defmod";

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error("dataset lacks {0} vectors")]
    MissingArch(ArchTag),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("token id {id} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error("vector has dimension {found}, model expects {expected}")]
    VectorDim { expected: usize, found: usize },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("stored tokenizer is unreadable: {0}")]
    Tokenizer(String),
}

pub type Result<T, E = BaselineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    /// Longest token sequence fed to the model, `bos` and `eos` included.
    pub max_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 256,
            layers: 2,
            heads: 4,
            ff_dim: 512,
            max_len: 128,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.heads == 0 || self.d_model % self.heads != 0 {
            return Err(BaselineError::Config(format!(
                "heads ({}) must divide d_model ({})",
                self.heads, self.d_model
            )));
        }
        if self.max_len < 3 || self.ff_dim == 0 {
            return Err(BaselineError::Config("max_len must be >= 3 and ff_dim > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub max_epochs: usize,
    pub patience: usize,
    pub min_rel_improvement: f64,
    pub batch_size: usize,
    /// Batches whose gradients are averaged into one optimizer update.
    pub accumulation: usize,
    pub dropout: f64,
    /// Used by definition modeling only.
    pub label_smoothing: f64,
    pub optimizer: OptimizerConfig,
    pub warmup_steps: usize,
    /// Hard cap on optimizer updates; the schedule decays to 0 here when set.
    pub max_steps: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            max_epochs: 100,
            patience: 5,
            min_rel_improvement: 0.001,
            batch_size: 16,
            accumulation: 1,
            dropout: 0.1,
            label_smoothing: 0.1,
            optimizer: OptimizerConfig::default(),
            warmup_steps: 100,
            max_steps: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.optimizer.validate()?;
        if self.patience == 0 || self.accumulation == 0 || self.batch_size == 0 {
            return Err(BaselineError::Config(
                "patience, accumulation and batch_size must be >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) || !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(BaselineError::Config("dropout and label_smoothing must lie in [0, 1)".into()));
        }
        Ok(())
    }

    fn schedule(&self, n_train: usize) -> Result<LrSchedule> {
        let batches = n_train.div_ceil(self.batch_size);
        let per_epoch = batches.div_ceil(self.accumulation);
        let mut total = per_epoch * self.max_epochs;
        if let Some(cap) = self.max_steps {
            total = total.min(cap);
        }
        Ok(LrSchedule::new(self.warmup_steps.min(total), total, self.optimizer.lr)?)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub steps: usize,
    pub best_epoch: usize,
    pub best_valid_loss: f64,
    pub train_loss: Vec<f64>,
    pub valid_loss: Vec<f64>,
    pub stopped_early: bool,
}

/// Everything besides weights needed to rebuild a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub model: ModelConfig,
    pub vocab_size: usize,
    pub vector_dim: usize,
    pub arch: ArchTag,
}

fn gloss_ids(tok: &SubwordVocab, gloss: &str, max_len: usize) -> Vec<usize> {
    let mut ids = vec![BOS as usize];
    ids.extend(tok.encode(gloss).into_iter().take(max_len - 2).map(|i| i as usize));
    ids.push(EOS as usize);
    ids
}

fn check_ids(ids: &[u32], vocab: usize) -> Result<Vec<usize>> {
    ids.iter()
        .map(|&id| {
            if (id as usize) < vocab {
                Ok(id as usize)
            } else {
                Err(BaselineError::TokenOutOfRange { id, vocab })
            }
        })
        .collect()
}

/// Parameter layout of the reverse-dictionary model.
#[derive(Debug, Clone)]
pub struct RevdictNet {
    pub meta: ModelMeta,
    pub embedding: Embedding,
    pub encoder: Encoder,
    pub projection: Linear,
    positions: Tensor,
}

impl RevdictNet {
    pub fn new(meta: ModelMeta, store: &mut ParamStore, rng: &mut SplitMix64) -> Result<Self> {
        meta.model.validate()?;
        let m = &meta.model;
        let embedding = Embedding::new(store, rng, "embedding", meta.vocab_size, m.d_model);
        let encoder = Encoder::new(store, rng, "encoder", m.layers, m.d_model, m.heads, m.ff_dim)?;
        let projection = Linear::new(store, rng, "projection", m.d_model, meta.vector_dim, false);
        let positions = positional_encoding(m.max_len, m.d_model);
        Ok(Self {
            meta,
            embedding,
            encoder,
            projection,
            positions,
        })
    }

    /// `W_p relu(sum_t h_t)` for a full `bos .. eos` sequence; `1 x vector_dim`.
    pub fn forward(&self, g: &mut Graph, ids: &[usize], dropout: f64) -> Result<NodeId, ShapeError> {
        let len = ids.len().min(self.meta.model.max_len);
        let ids = &ids[..len];
        let x = self.embedding.forward(g, ids)?;
        let pe = g.input(Tensor::matrix(
            len,
            self.meta.model.d_model,
            self.positions.data[..len * self.meta.model.d_model].to_vec(),
        ));
        let x = g.add(x, pe)?;
        let x = g.dropout(x, dropout);
        let h = self.encoder.forward(g, x, false, dropout)?;
        let s = g.sum_rows(h);
        let s = g.relu(s);
        self.projection.forward(g, s)
    }

    /// Mean squared error over a batch of `(ids, target)` pairs.
    pub fn loss(&self, g: &mut Graph, batch: &[&RevdictExample], dropout: f64) -> Result<NodeId, ShapeError> {
        let mut preds = Vec::with_capacity(batch.len());
        let mut target = Vec::with_capacity(batch.len() * self.meta.vector_dim);
        for ex in batch {
            preds.push(self.forward(g, &ex.ids, dropout)?);
            target.extend_from_slice(&ex.target);
        }
        let all = if preds.len() == 1 { preds[0] } else { g.concat_rows(&preds)? };
        g.mse(all, &target)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RevdictExample {
    pub ids: Vec<usize>,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RevdictModel {
    pub net: RevdictNet,
    pub store: ParamStore,
    pub tokenizer: SubwordVocab,
    pub seed: u64,
}

impl RevdictModel {
    pub fn new(meta: ModelMeta, tokenizer: SubwordVocab, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new();
        let mut rng = SplitMix64::new(seed);
        let net = RevdictNet::new(meta, &mut store, &mut rng)?;
        Ok(Self {
            net,
            store,
            tokenizer,
            seed,
        })
    }

    pub fn predict(&self, ids: &[u32]) -> Result<Vec<f64>> {
        let ids = check_ids(ids, self.net.meta.vocab_size)?;
        let mut g = Graph::new(&self.store);
        let y = self.net.forward(&mut g, &ids, 0.0)?;
        Ok(g.value(y).data.clone())
    }

    /// Tokenizes `gloss`, wraps it in `bos .. eos`, and predicts.
    pub fn predict_gloss(&self, gloss: &str) -> Result<Vec<f64>> {
        let ids = gloss_ids(&self.tokenizer, gloss, self.net.meta.model.max_len);
        let ids: Vec<u32> = ids.into_iter().map(|i| i as u32).collect();
        self.predict(&ids)
    }

    pub fn examples(&self, data: &Dataset) -> Result<Vec<RevdictExample>> {
        let arch = self.net.meta.arch;
        data.items
            .iter()
            .map(|item| {
                let target = item.embedding(arch).ok_or(BaselineError::MissingArch(arch))?;
                if target.len() != self.net.meta.vector_dim {
                    return Err(BaselineError::VectorDim {
                        expected: self.net.meta.vector_dim,
                        found: target.len(),
                    });
                }
                Ok(RevdictExample {
                    ids: gloss_ids(&self.tokenizer, &item.gloss, self.net.meta.model.max_len),
                    target: target.to_vec(),
                })
            })
            .collect()
    }

    /// Mean squared error over `data` with dropout off.
    pub fn mean_loss(&self, data: &[RevdictExample]) -> Result<f64> {
        let mut total = 0.0;
        for ex in data {
            let mut g = Graph::new(&self.store);
            let l = self.net.loss(&mut g, &[ex], 0.0)?;
            total += g.scalar(l);
        }
        Ok(total / data.len().max(1) as f64)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::from_store(
            REVDICT_KIND,
            serde_json::to_value(&self.net.meta).expect("meta serializes"),
            self.seed,
            vocab_json(&self.tokenizer),
            &self.store,
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(REVDICT_KIND)?;
        let meta: ModelMeta = serde_json::from_value(ck.header.config.clone()).map_err(CheckpointError::from)?;
        let mut model = Self::new(meta, vocab_from_json(&ck.header.vocab)?, ck.header.seed)?;
        ck.restore_into(&mut model.store)?;
        Ok(model)
    }
}

/// Parameter layout of the definition-modeling model.
#[derive(Debug, Clone)]
pub struct DefmodNet {
    pub meta: ModelMeta,
    pub embedding: Embedding,
    /// Maps the definiendum vector into model space; absent when the widths match.
    pub input_projection: Option<Linear>,
    pub encoder: Encoder,
    pub output: Linear,
    positions: Tensor,
}

impl DefmodNet {
    pub fn new(meta: ModelMeta, store: &mut ParamStore, rng: &mut SplitMix64) -> Result<Self> {
        meta.model.validate()?;
        let m = &meta.model;
        let embedding = Embedding::new(store, rng, "embedding", meta.vocab_size, m.d_model);
        let input_projection = (meta.vector_dim != m.d_model)
            .then(|| Linear::new(store, rng, "input_projection", meta.vector_dim, m.d_model, true));
        let encoder = Encoder::new(store, rng, "encoder", m.layers, m.d_model, m.heads, m.ff_dim)?;
        let output = Linear::new(store, rng, "output", m.d_model, meta.vocab_size, true);
        // uniform next-token distribution at initialization
        store.value_mut(output.weight).data.iter_mut().for_each(|w| *w = 0.0);
        let positions = positional_encoding(m.max_len + 1, m.d_model);
        Ok(Self {
            meta,
            embedding,
            input_projection,
            encoder,
            output,
            positions,
        })
    }

    /// Logits for every position of `d, prefix[0], prefix[1], ..`; row `t`
    /// scores the token following input position `t`.
    pub fn logits(&self, g: &mut Graph, d: &[f64], prefix: &[usize], dropout: f64) -> Result<NodeId, ShapeError> {
        let dm = self.meta.model.d_model;
        let dv = g.input(Tensor::row(d.to_vec()));
        let first = match &self.input_projection {
            Some(p) => p.forward(g, dv)?,
            None => dv,
        };
        let x = if prefix.is_empty() {
            first
        } else {
            let e = self.embedding.forward(g, prefix)?;
            g.concat_rows(&[first, e])?
        };
        let len = prefix.len() + 1;
        if len > self.positions.rows() {
            return Err(ShapeError::Invalid {
                op: "defmod",
                detail: format!("sequence of {len} exceeds max_len {}", self.positions.rows()),
            });
        }
        let pe = g.input(Tensor::matrix(len, dm, self.positions.data[..len * dm].to_vec()));
        let x = g.add(x, pe)?;
        let x = g.dropout(x, dropout);
        let h = self.encoder.forward(g, x, true, dropout)?;
        self.output.forward(g, h)
    }

    /// Label-smoothed cross-entropy averaged over every target token in the batch.
    pub fn loss(
        &self,
        g: &mut Graph,
        batch: &[&DefmodExample],
        dropout: f64,
        smoothing: f64,
    ) -> Result<NodeId, ShapeError> {
        let mut rows = Vec::with_capacity(batch.len());
        let mut targets = Vec::new();
        for ex in batch {
            rows.push(self.logits(g, &ex.vector, &ex.inputs, dropout)?);
            targets.extend_from_slice(&ex.targets);
        }
        let all = if rows.len() == 1 { rows[0] } else { g.concat_rows(&rows)? };
        g.cross_entropy(all, &targets, None, smoothing)
    }
}

/// Teacher-forcing example: inputs are `bos, w_1..w_m` (after the vector),
/// targets are `bos, w_1..w_m, eos`.
#[derive(Debug, Clone, PartialEq)]
pub struct DefmodExample {
    pub vector: Vec<f64>,
    pub inputs: Vec<usize>,
    pub targets: Vec<usize>,
}

impl DefmodExample {
    pub fn new(vector: Vec<f64>, gloss_ids: &[usize]) -> Self {
        // gloss_ids is bos .. eos
        Self {
            vector,
            inputs: gloss_ids[..gloss_ids.len() - 1].to_vec(),
            targets: gloss_ids.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamOutput {
    /// Generated tokens after the forced `bos`, ending in `eos` when finished.
    pub tokens: Vec<u32>,
    /// Length-normalized log-probability.
    pub score: f64,
    pub finished: bool,
    /// Sorted beam scores after each expansion step.
    pub trace: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct DefmodModel {
    pub net: DefmodNet,
    pub store: ParamStore,
    pub tokenizer: SubwordVocab,
    pub seed: u64,
}

impl DefmodModel {
    pub fn new(meta: ModelMeta, tokenizer: SubwordVocab, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new();
        let mut rng = SplitMix64::new(seed);
        let net = DefmodNet::new(meta, &mut store, &mut rng)?;
        Ok(Self {
            net,
            store,
            tokenizer,
            seed,
        })
    }

    pub fn examples(&self, data: &Dataset) -> Result<Vec<DefmodExample>> {
        let arch = self.net.meta.arch;
        data.items
            .iter()
            .map(|item| {
                let v = item.embedding(arch).ok_or(BaselineError::MissingArch(arch))?;
                if v.len() != self.net.meta.vector_dim {
                    return Err(BaselineError::VectorDim {
                        expected: self.net.meta.vector_dim,
                        found: v.len(),
                    });
                }
                let ids = gloss_ids(&self.tokenizer, &item.gloss, self.net.meta.model.max_len);
                Ok(DefmodExample::new(v.to_vec(), &ids))
            })
            .collect()
    }

    /// Token-weighted mean smoothed cross-entropy over `data`, dropout off.
    pub fn mean_loss(&self, data: &[DefmodExample], smoothing: f64) -> Result<f64> {
        let (mut total, mut count) = (0.0, 0usize);
        for ex in data {
            let mut g = Graph::new(&self.store);
            let l = self.net.loss(&mut g, &[ex], 0.0, smoothing)?;
            total += g.scalar(l) * ex.targets.len() as f64;
            count += ex.targets.len();
        }
        Ok(total / count.max(1) as f64)
    }

    /// Teacher-forced next-token accuracy, leaving out position 0 whose
    /// target is always `bos`.
    pub fn token_accuracy(&self, data: &[DefmodExample]) -> Result<f64> {
        let (mut hit, mut total) = (0usize, 0usize);
        for ex in data {
            let mut g = Graph::new(&self.store);
            let l = self.net.logits(&mut g, &ex.vector, &ex.inputs, 0.0)?;
            let v = g.value(l);
            for (t, &target) in ex.targets.iter().enumerate().skip(1) {
                hit += (argmax(v.row_slice(t)) == target) as usize;
                total += 1;
            }
        }
        Ok(hit as f64 / total.max(1) as f64)
    }

    fn check_vector(&self, d: &[f64]) -> Result<()> {
        if d.len() != self.net.meta.vector_dim {
            return Err(BaselineError::VectorDim {
                expected: self.net.meta.vector_dim,
                found: d.len(),
            });
        }
        Ok(())
    }

    fn next_log_probs(&self, d: &[f64], prefix: &[usize]) -> Result<Vec<f64>> {
        let mut g = Graph::new(&self.store);
        let l = self.net.logits(&mut g, d, prefix, 0.0)?;
        let row = g.value(l).row_slice(prefix.len());
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        Ok(row.iter().map(|x| x - lse).collect())
    }

    fn room(&self, max_len: usize) -> usize {
        // positions: d, bos, then generated tokens
        max_len.min(self.net.meta.model.max_len - 1)
    }

    /// Argmax decoding after the forced `bos`.
    pub fn greedy(&self, d: &[f64], max_len: usize) -> Result<Vec<u32>> {
        self.check_vector(d)?;
        let mut prefix = vec![BOS as usize];
        let mut out = Vec::new();
        for _ in 0..self.room(max_len) {
            let lp = self.next_log_probs(d, &prefix)?;
            let tok = argmax(&lp);
            out.push(tok as u32);
            if tok == EOS as usize {
                break;
            }
            prefix.push(tok);
        }
        Ok(out)
    }

    /// Beam search with scores normalized by generated length. Stops once
    /// every kept beam has emitted `eos` or after `max_len` tokens.
    pub fn generate(&self, d: &[f64], beam: usize, max_len: usize) -> Result<BeamOutput> {
        self.check_vector(d)?;
        let beam = beam.max(1);
        struct Hyp {
            tokens: Vec<u32>,
            logp: f64,
            finished: bool,
        }
        let norm = |h: &Hyp| if h.tokens.is_empty() { 0.0 } else { h.logp / h.tokens.len() as f64 };
        let mut beams = vec![Hyp {
            tokens: Vec::new(),
            logp: 0.0,
            finished: false,
        }];
        let mut trace = Vec::new();
        for _ in 0..self.room(max_len) {
            if beams.iter().all(|b| b.finished) {
                break;
            }
            let mut candidates = Vec::new();
            for b in beams {
                if b.finished {
                    candidates.push(b);
                    continue;
                }
                let mut prefix = vec![BOS as usize];
                prefix.extend(b.tokens.iter().map(|&t| t as usize));
                let lp = self.next_log_probs(d, &prefix)?;
                let mut order: Vec<usize> = (0..lp.len()).collect();
                order.sort_by(|&x, &y| lp[y].total_cmp(&lp[x]).then(x.cmp(&y)));
                for &tok in order.iter().take(beam) {
                    let mut tokens = b.tokens.clone();
                    tokens.push(tok as u32);
                    candidates.push(Hyp {
                        tokens,
                        logp: b.logp + lp[tok],
                        finished: tok == EOS as usize,
                    });
                }
            }
            candidates.sort_by(|x, y| norm(y).total_cmp(&norm(x)));
            candidates.truncate(beam);
            trace.push(candidates.iter().map(norm).collect());
            beams = candidates;
        }
        let best = beams
            .iter()
            .find(|b| b.finished)
            .unwrap_or(&beams[0]);
        Ok(BeamOutput {
            tokens: best.tokens.clone(),
            score: norm(best),
            finished: best.finished,
            trace,
        })
    }

    /// Beam search decoded to text, `eos` dropped.
    pub fn generate_gloss(&self, d: &[f64], beam: usize, max_len: usize) -> Result<String> {
        let out = self.generate(d, beam, max_len)?;
        Ok(self.tokenizer.decode(&out.tokens))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::from_store(
            DEFMOD_KIND,
            serde_json::to_value(&self.net.meta).expect("meta serializes"),
            self.seed,
            vocab_json(&self.tokenizer),
            &self.store,
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(DEFMOD_KIND)?;
        let meta: ModelMeta = serde_json::from_value(ck.header.config.clone()).map_err(CheckpointError::from)?;
        let mut model = Self::new(meta, vocab_from_json(&ck.header.vocab)?, ck.header.seed)?;
        ck.restore_into(&mut model.store)?;
        Ok(model)
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn vocab_json(tok: &SubwordVocab) -> serde_json::Value {
    serde_json::from_str(&tok.to_json_string()).expect("vocabulary JSON is valid")
}

fn vocab_from_json(v: &serde_json::Value) -> Result<SubwordVocab> {
    SubwordVocab::from_json_str(&v.to_string()).map_err(|e| BaselineError::Tokenizer(e.to_string()))
}

/// One model's view for the shared training loop.
pub(crate) trait Trainable {
    type Example;
    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;
    fn batch_loss(&self, g: &mut Graph, batch: &[&Self::Example], cfg: &TrainConfig) -> Result<NodeId, ShapeError>;
    fn eval_loss(&self, data: &[Self::Example], cfg: &TrainConfig) -> Result<f64>;
}

impl Trainable for RevdictModel {
    type Example = RevdictExample;
    fn store(&self) -> &ParamStore {
        &self.store
    }
    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
    fn batch_loss(&self, g: &mut Graph, batch: &[&RevdictExample], cfg: &TrainConfig) -> Result<NodeId, ShapeError> {
        self.net.loss(g, batch, cfg.dropout)
    }
    fn eval_loss(&self, data: &[RevdictExample], _cfg: &TrainConfig) -> Result<f64> {
        self.mean_loss(data)
    }
}

impl Trainable for DefmodModel {
    type Example = DefmodExample;
    fn store(&self) -> &ParamStore {
        &self.store
    }
    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
    fn batch_loss(&self, g: &mut Graph, batch: &[&DefmodExample], cfg: &TrainConfig) -> Result<NodeId, ShapeError> {
        self.net.loss(g, batch, cfg.dropout, cfg.label_smoothing)
    }
    fn eval_loss(&self, data: &[DefmodExample], cfg: &TrainConfig) -> Result<f64> {
        self.mean_loss(data, cfg.label_smoothing)
    }
}

/// Minibatch AdamW with gradient accumulation, the warmup/half-cosine
/// schedule, per-epoch validation and early stopping. Leaves the model at
/// its best validation loss.
pub(crate) fn fit<M: Trainable>(
    model: &mut M,
    train: &[M::Example],
    valid: &[M::Example],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    fit_with(model, train, valid, cfg, &mut |_, _| {})
}

/// [`fit`] with a callback after each epoch, before the best weights are restored.
pub(crate) fn fit_with<M: Trainable>(
    model: &mut M,
    train: &[M::Example],
    valid: &[M::Example],
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&M, usize),
) -> Result<TrainReport> {
    if train.is_empty() {
        return Err(BaselineError::EmptyTrainingSet);
    }
    let valid = if valid.is_empty() { train } else { valid };
    let schedule = cfg.schedule(train.len())?;
    let mut opt = AdamW::new(cfg.optimizer, model.store())?;
    let mut rng = SplitMix64::new(cfg.seed ^ 0x7261_696e);
    let mut stopper = EarlyStopping::new(cfg.patience, cfg.min_rel_improvement);
    let mut report = TrainReport::default();
    let mut best = model.store().clone();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grads = model.store().zero_grads();
    let mut pending = 0usize;

    'epochs: for epoch in 0..cfg.max_epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let batches: Vec<&[usize]> = order.chunks(cfg.batch_size).collect();
        let mut budget_hit = false;
        for (bi, chunk) in batches.iter().enumerate() {
            let batch: Vec<&M::Example> = chunk.iter().map(|&i| &train[i]).collect();
            let mut g = Graph::training(model.store(), rng.fork());
            let loss = model.batch_loss(&mut g, &batch, cfg)?;
            epoch_loss += g.scalar(loss) * batch.len() as f64;
            g.backward(loss, &mut grads);
            drop(g);
            pending += 1;
            if pending == cfg.accumulation || bi + 1 == batches.len() {
                grads.scale(1.0 / pending as f64);
                let lr = lr_at(&schedule, report.steps.min(schedule.total))?;
                opt.step(model.store_mut(), &grads, lr);
                grads.zero();
                pending = 0;
                report.steps += 1;
                if report.steps >= schedule.total {
                    budget_hit = true;
                    break;
                }
            }
        }
        report.epochs_run = epoch + 1;
        report.train_loss.push(epoch_loss / train.len() as f64);
        let vl = model.eval_loss(valid, cfg)?;
        report.valid_loss.push(vl);
        on_epoch(model, epoch + 1);
        match stopper.observe(vl) {
            StopVerdict::Improved => {
                best = model.store().clone();
                report.best_epoch = epoch + 1;
                report.best_valid_loss = vl;
            }
            StopVerdict::NoImprovement => {}
            StopVerdict::Stop => {
                report.stopped_early = true;
                break 'epochs;
            }
        }
        if budget_hit {
            break;
        }
    }
    *model.store_mut() = best;
    Ok(report)
}

fn check_arch(data: &Dataset, arch: ArchTag) -> Result<usize> {
    if data.is_empty() {
        return Err(BaselineError::EmptyTrainingSet);
    }
    if !data.has_arch(arch) {
        return Err(BaselineError::MissingArch(arch));
    }
    data.dim(arch).ok_or(BaselineError::MissingArch(arch))
}

fn with_report(mut ck: Checkpoint, report: &TrainReport) -> Checkpoint {
    ck.header.extra = serde_json::json!({ "train_report": report });
    ck
}

pub fn train_revdict(
    train: &Dataset,
    valid: &Dataset,
    arch: ArchTag,
    tok: &SubwordVocab,
    cfg: &TrainConfig,
) -> Result<(RevdictModel, TrainReport, Checkpoint)> {
    cfg.validate()?;
    let dim = check_arch(train, arch)?;
    let meta = ModelMeta {
        model: cfg.model.clone(),
        vocab_size: tok.len(),
        vector_dim: dim,
        arch,
    };
    let mut model = RevdictModel::new(meta, tok.clone(), cfg.seed)?;
    let train_ex = model.examples(train)?;
    let valid_ex = if valid.is_empty() { Vec::new() } else { model.examples(valid)? };
    let report = fit(&mut model, &train_ex, &valid_ex, cfg)?;
    let ck = with_report(model.to_checkpoint(), &report);
    Ok((model, report, ck))
}

pub fn predict_revdict(ck: &Checkpoint, ids: &[u32]) -> Result<Vec<f64>> {
    RevdictModel::from_checkpoint(ck)?.predict(ids)
}

pub fn train_defmod(
    train: &Dataset,
    valid: &Dataset,
    arch: ArchTag,
    tok: &SubwordVocab,
    cfg: &TrainConfig,
) -> Result<(DefmodModel, TrainReport, Checkpoint)> {
    cfg.validate()?;
    let dim = check_arch(train, arch)?;
    let meta = ModelMeta {
        model: cfg.model.clone(),
        vocab_size: tok.len(),
        vector_dim: dim,
        arch,
    };
    let mut model = DefmodModel::new(meta, tok.clone(), cfg.seed)?;
    let train_ex = model.examples(train)?;
    let valid_ex = if valid.is_empty() { Vec::new() } else { model.examples(valid)? };
    let report = fit(&mut model, &train_ex, &valid_ex, cfg)?;
    let ck = with_report(model.to_checkpoint(), &report);
    Ok((model, report, ck))
}

pub fn generate_defmod(ck: &Checkpoint, d: &[f64], beam: usize, max_len: usize) -> Result<Vec<u32>> {
    Ok(DefmodModel::from_checkpoint(ck)?.generate(d, beam, max_len)?.tokens)
}
