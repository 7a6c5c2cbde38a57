//! Character-level LSTM autoencoder. A word's representation is the sum of
//! the encoder's hidden states; the decoder starts from that sum and
//! reconstructs the characters.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use glossbench_core::SplitMix64;

use crate::baselines::{BaselineError, Result, TrainConfig, TrainReport, Trainable};
use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::graph::{Graph, NodeId, ParamStore, ShapeError};
use crate::layers::{Embedding, Linear, LstmCell};
use crate::tensor::Tensor;

pub const CHAR_AE_KIND: &str = "char_ae";

const PAD: usize = 0;
const UNK: usize = 1;
const BOS: usize = 2;
const EOS: usize = 3;
const SPECIALS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CharAeConfig {
    pub char_dim: usize,
    /// Width of the word representation.
    pub hidden: usize,
    /// One character-embedding matrix for encoder and decoder.
    pub share_embeddings: bool,
    /// Pass the summed states through a learned affine map into both decoder
    /// states instead of using the sum as `h` with `c = 0`.
    pub affine_init: bool,
    /// Reconstruction stops after this many characters.
    pub max_word_len: usize,
}

impl Default for CharAeConfig {
    fn default() -> Self {
        Self {
            char_dim: 32,
            hidden: 128,
            share_embeddings: false,
            affine_init: false,
            max_word_len: 32,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CharAeNet {
    pub cfg: CharAeConfig,
    pub enc_embedding: Embedding,
    pub dec_embedding: Embedding,
    pub encoder: LstmCell,
    pub decoder: LstmCell,
    pub init_h: Option<Linear>,
    pub init_c: Option<Linear>,
    pub output: Linear,
}

impl CharAeNet {
    pub fn new(cfg: CharAeConfig, vocab: usize, store: &mut ParamStore, rng: &mut SplitMix64) -> Self {
        let enc_embedding = Embedding::new(store, rng, "enc_embedding", vocab, cfg.char_dim);
        let dec_embedding = if cfg.share_embeddings {
            enc_embedding.clone()
        } else {
            Embedding::new(store, rng, "dec_embedding", vocab, cfg.char_dim)
        };
        let encoder = LstmCell::new(store, rng, "encoder", cfg.char_dim, cfg.hidden);
        let decoder = LstmCell::new(store, rng, "decoder", cfg.char_dim, cfg.hidden);
        let (init_h, init_c) = if cfg.affine_init {
            (
                Some(Linear::new(store, rng, "init_h", cfg.hidden, cfg.hidden, true)),
                Some(Linear::new(store, rng, "init_c", cfg.hidden, cfg.hidden, true)),
            )
        } else {
            (None, None)
        };
        let output = Linear::new(store, rng, "output", cfg.hidden, vocab, true);
        Self {
            cfg,
            enc_embedding,
            dec_embedding,
            encoder,
            decoder,
            init_h,
            init_c,
            output,
        }
    }

    /// Summed encoder hidden states for a batch of character-id sequences
    /// (`batch x hidden`). Steps past a word's end are masked out of the sum.
    pub fn encode(&self, g: &mut Graph, words: &[&[usize]], dropout: f64) -> Result<NodeId, ShapeError> {
        let b = words.len();
        let hd = self.cfg.hidden;
        let longest = words.iter().map(|w| w.len()).max().unwrap_or(0);
        let mut h = g.input(Tensor::zeros(vec![b, hd]));
        let mut c = g.input(Tensor::zeros(vec![b, hd]));
        let mut sum = None;
        for t in 0..longest {
            let ids: Vec<usize> = words.iter().map(|w| w.get(t).copied().unwrap_or(PAD)).collect();
            let x = self.enc_embedding.forward(g, &ids)?;
            let x = g.dropout(x, dropout);
            (h, c) = self.encoder.step(g, x, h, c)?;
            let contrib = if words.iter().all(|w| w.len() > t) {
                h
            } else {
                let mask: Vec<f64> = words.iter().map(|w| (w.len() > t) as u8 as f64).collect();
                let m = g.input(Tensor::matrix(b, 1, mask));
                g.mul(h, m)?
            };
            sum = Some(match sum {
                None => contrib,
                Some(s) => g.add(s, contrib)?,
            });
        }
        Ok(sum.unwrap_or_else(|| g.input(Tensor::zeros(vec![b, hd]))))
    }

    fn initial_state(&self, g: &mut Graph, rep: NodeId) -> Result<(NodeId, NodeId), ShapeError> {
        match (&self.init_h, &self.init_c) {
            (Some(ih), Some(ic)) => {
                let h = ih.forward(g, rep)?;
                let h = g.tanh(h);
                let c = ic.forward(g, rep)?;
                Ok((h, c))
            }
            _ => {
                let (b, hd) = g.dims(rep);
                let c = g.input(Tensor::zeros(vec![b, hd]));
                Ok((rep, c))
            }
        }
    }

    /// Teacher-forced cross-entropy: decoder inputs `bos, c_1..c_n`, targets
    /// `c_1..c_n, eos`, averaged over real (unpadded) target positions.
    pub fn loss(&self, g: &mut Graph, words: &[&[usize]], dropout: f64, smoothing: f64) -> Result<NodeId, ShapeError> {
        let rep = self.encode(g, words, dropout)?;
        let (mut h, mut c) = self.initial_state(g, rep)?;
        let steps = words.iter().map(|w| w.len()).max().unwrap_or(0) + 1;
        let mut rows = Vec::with_capacity(steps);
        let mut targets = Vec::with_capacity(steps * words.len());
        let mut weights = Vec::with_capacity(steps * words.len());
        for t in 0..steps {
            let ids: Vec<usize> = words
                .iter()
                .map(|w| if t == 0 { BOS } else { w.get(t - 1).copied().unwrap_or(PAD) })
                .collect();
            let x = self.dec_embedding.forward(g, &ids)?;
            let x = g.dropout(x, dropout);
            (h, c) = self.decoder.step(g, x, h, c)?;
            let hd = g.dropout(h, dropout);
            rows.push(self.output.forward(g, hd)?);
            for w in words {
                targets.push(match t.cmp(&w.len()) {
                    std::cmp::Ordering::Less => w[t],
                    std::cmp::Ordering::Equal => EOS,
                    std::cmp::Ordering::Greater => PAD,
                });
                weights.push((t <= w.len()) as u8 as f64);
            }
        }
        let all = g.concat_rows(&rows)?;
        g.cross_entropy(all, &targets, Some(&weights), smoothing)
    }
}

#[derive(Debug, Clone)]
pub struct CharAutoencoder {
    pub net: CharAeNet,
    pub store: ParamStore,
    /// Characters in id order after the specials.
    pub chars: Vec<char>,
    pub seed: u64,
}

impl CharAutoencoder {
    pub fn new(cfg: CharAeConfig, chars: Vec<char>, seed: u64) -> Self {
        let mut store = ParamStore::new();
        let mut rng = SplitMix64::new(seed);
        let net = CharAeNet::new(cfg, chars.len() + SPECIALS, &mut store, &mut rng);
        Self {
            net,
            store,
            chars,
            seed,
        }
    }

    pub fn dim(&self) -> usize {
        self.net.cfg.hidden
    }

    /// Character ids; characters outside the vocabulary map to `unk`.
    pub fn char_ids(&self, word: &str) -> Vec<usize> {
        word.chars()
            .map(|ch| match self.chars.binary_search(&ch) {
                Ok(i) => i + SPECIALS,
                Err(_) => UNK,
            })
            .collect()
    }

    pub fn embed_word(&self, word: &str) -> Result<Vec<f64>> {
        Ok(self.embed_words(&[word])?.remove(0))
    }

    pub fn embed_words(&self, words: &[&str]) -> Result<Vec<Vec<f64>>> {
        if words.iter().any(|w| w.is_empty()) {
            return Err(BaselineError::Config("cannot embed an empty word".into()));
        }
        let ids: Vec<Vec<usize>> = words.iter().map(|w| self.char_ids(w)).collect();
        let refs: Vec<&[usize]> = ids.iter().map(Vec::as_slice).collect();
        let mut g = Graph::new(&self.store);
        let rep = self.net.encode(&mut g, &refs, 0.0)?;
        let v = g.value(rep);
        Ok((0..words.len()).map(|i| v.row_slice(i).to_vec()).collect())
    }

    pub fn reconstruct(&self, word: &str) -> Result<String> {
        Ok(self.reconstruct_batch(&[word])?.remove(0))
    }

    /// Greedy decoding from each word's representation, batched.
    pub fn reconstruct_batch(&self, words: &[&str]) -> Result<Vec<String>> {
        if words.is_empty() {
            return Ok(Vec::new());
        }
        if words.iter().any(|w| w.is_empty()) {
            return Err(BaselineError::Config("cannot reconstruct an empty word".into()));
        }
        let ids: Vec<Vec<usize>> = words.iter().map(|w| self.char_ids(w)).collect();
        let refs: Vec<&[usize]> = ids.iter().map(Vec::as_slice).collect();
        let mut g = Graph::new(&self.store);
        let rep = self.net.encode(&mut g, &refs, 0.0)?;
        let (mut h, mut c) = self.net.initial_state(&mut g, rep)?;
        let mut prev = vec![BOS; words.len()];
        let mut out = vec![String::new(); words.len()];
        let mut done = vec![false; words.len()];
        for _ in 0..=self.net.cfg.max_word_len {
            let x = self.net.dec_embedding.forward(&mut g, &prev)?;
            (h, c) = self.net.decoder.step(&mut g, x, h, c)?;
            let logits = self.net.output.forward(&mut g, h)?;
            let lv = g.value(logits);
            for i in 0..words.len() {
                let row = lv.row_slice(i);
                let mut best = 0;
                for (j, &x) in row.iter().enumerate() {
                    if x > row[best] {
                        best = j;
                    }
                }
                prev[i] = best;
                if done[i] {
                    continue;
                }
                match best {
                    EOS => done[i] = true,
                    id if id >= SPECIALS => out[i].push(self.chars[id - SPECIALS]),
                    _ => out[i].push('\u{FFFD}'),
                }
            }
            if done.iter().all(|&d| d) {
                break;
            }
        }
        Ok(out)
    }

    /// Fraction of `words` reconstructed exactly.
    pub fn reconstruction_accuracy(&self, words: &[&str]) -> Result<f64> {
        let mut hits = 0;
        for chunk in words.chunks(256) {
            let rec = self.reconstruct_batch(chunk)?;
            hits += rec.iter().zip(chunk).filter(|(r, w)| r == *w).count();
        }
        Ok(hits as f64 / words.len().max(1) as f64)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let chars: String = self.chars.iter().collect();
        Checkpoint::from_store(
            CHAR_AE_KIND,
            serde_json::to_value(&self.net.cfg).expect("config serializes"),
            self.seed,
            serde_json::Value::String(chars),
            &self.store,
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CHAR_AE_KIND)?;
        let cfg: CharAeConfig = serde_json::from_value(ck.header.config.clone()).map_err(CheckpointError::from)?;
        let chars: Vec<char> = ck
            .header
            .vocab
            .as_str()
            .ok_or_else(|| CheckpointError::Mismatch("character vocabulary missing".into()))?
            .chars()
            .collect();
        let mut model = Self::new(cfg, chars, ck.header.seed);
        ck.restore_into(&mut model.store)?;
        Ok(model)
    }
}

impl Trainable for CharAutoencoder {
    type Example = Vec<usize>;
    fn store(&self) -> &ParamStore {
        &self.store
    }
    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
    fn batch_loss(&self, g: &mut Graph, batch: &[&Vec<usize>], cfg: &TrainConfig) -> Result<NodeId, ShapeError> {
        let refs: Vec<&[usize]> = batch.iter().map(|w| w.as_slice()).collect();
        self.net.loss(g, &refs, cfg.dropout, cfg.label_smoothing)
    }
    fn eval_loss(&self, data: &[Vec<usize>], cfg: &TrainConfig) -> Result<f64> {
        let (mut total, mut count) = (0.0, 0usize);
        for chunk in data.chunks(256) {
            let refs: Vec<&[usize]> = chunk.iter().map(Vec::as_slice).collect();
            let tokens: usize = chunk.iter().map(|w| w.len() + 1).sum();
            let mut g = Graph::new(&self.store);
            let l = self.net.loss(&mut g, &refs, 0.0, cfg.label_smoothing)?;
            total += g.scalar(l) * tokens as f64;
            count += tokens;
        }
        Ok(total / count.max(1) as f64)
    }
}

/// Trains on `words`, early-stopping on the training reconstruction loss.
/// `on_epoch` sees the model after every epoch.
pub fn train_char_ae_with(
    words: &[&str],
    ae: &CharAeConfig,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&CharAutoencoder, usize),
) -> Result<(CharAutoencoder, TrainReport)> {
    if words.is_empty() {
        return Err(BaselineError::EmptyTrainingSet);
    }
    if words.iter().any(|w| w.is_empty()) {
        return Err(BaselineError::Config("word list contains an empty word".into()));
    }
    cfg.validate()?;
    let chars: Vec<char> = words.iter().flat_map(|w| w.chars()).collect::<BTreeSet<_>>().into_iter().collect();
    let mut model = CharAutoencoder::new(ae.clone(), chars, cfg.seed);
    let examples: Vec<Vec<usize>> = words.iter().map(|w| model.char_ids(w)).collect();
    let report = crate::baselines::fit_with(&mut model, &examples, &[], cfg, on_epoch)?;
    Ok((model, report))
}

pub fn train_char_ae(words: &[&str], ae: &CharAeConfig, cfg: &TrainConfig) -> Result<(CharAutoencoder, TrainReport)> {
    train_char_ae_with(words, ae, cfg, &mut |_, _| {})
}

/// `n` distinct pronounceable pseudo-words of 1 to 4 syllables, seeded.
pub fn pseudo_words(seed: u64, n: usize) -> Vec<String> {
    const ONSETS: [&str; 16] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "st", "tr"];
    const VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "ai"];
    const CODAS: [&str; 5] = ["", "", "n", "r", "s"];
    let mut rng = SplitMix64::new(seed);
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = 1 + rng.below(4);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS[rng.below(ONSETS.len())]);
            w.push_str(VOWELS[rng.below(VOWELS.len())]);
            w.push_str(CODAS[rng.below(CODAS.len())]);
        }
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}
