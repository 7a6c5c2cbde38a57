//! Byte-pair subword tokenizer.
//!
//! Text is split on Unicode whitespace; every word becomes a sequence of
//! characters whose last character carries the end-of-word suffix `</w>`.
//! Training greedily merges the most frequent adjacent pair (ties broken by
//! lexicographic order of the pair) until the vocabulary is full or no pair
//! occurs at least twice. Case is preserved.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;
pub const NUM_SPECIALS: usize = 4;

pub const END_OF_WORD: &str = "</w>";
/// What an unknown id renders as.
pub const REPLACEMENT: &str = "\u{FFFD}";

#[derive(Debug, thiserror::Error)]
pub enum TokenizerError {
    #[error("cannot train on an empty corpus")]
    EmptyCorpus,
    #[error("vocab_size {requested} cannot hold the 4 specials and {alphabet} alphabet symbols")]
    VocabTooSmall { requested: usize, alphabet: usize },
    #[error("merge {index} references symbol \"{symbol}\" that is not yet defined")]
    BadMerge { index: usize, symbol: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed vocabulary file: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = TokenizerError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Specials {
    pub pad: u32,
    pub unk: u32,
    pub bos: u32,
    pub eos: u32,
}

impl Default for Specials {
    fn default() -> Self {
        Self {
            pad: PAD,
            unk: UNK,
            bos: BOS,
            eos: EOS,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    merges: Vec<(String, String)>,
    specials: Specials,
    alphabet: Vec<String>,
}

/// A trained subword vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct SubwordVocab {
    merges: Vec<(String, String)>,
    alphabet: Vec<String>,
    tokens: Vec<String>,
    token_to_id: HashMap<String, u32>,
    merge_rank: HashMap<(String, String), usize>,
}

const SPECIAL_NAMES: [&str; NUM_SPECIALS] = ["<pad>", "<unk>", "<bos>", "<eos>"];

impl SubwordVocab {
    fn build(alphabet: Vec<String>, merges: Vec<(String, String)>) -> Result<Self> {
        let mut tokens: Vec<String> = SPECIAL_NAMES.iter().map(|s| s.to_string()).collect();
        let mut token_to_id = HashMap::new();
        for sym in &alphabet {
            if !token_to_id.contains_key(sym) {
                token_to_id.insert(sym.clone(), tokens.len() as u32);
                tokens.push(sym.clone());
            }
        }
        let mut merge_rank = HashMap::new();
        for (index, (left, right)) in merges.iter().enumerate() {
            for sym in [left, right] {
                if !token_to_id.contains_key(sym) {
                    return Err(TokenizerError::BadMerge {
                        index,
                        symbol: sym.clone(),
                    });
                }
            }
            let merged = format!("{left}{right}");
            if !token_to_id.contains_key(&merged) {
                token_to_id.insert(merged.clone(), tokens.len() as u32);
                tokens.push(merged);
            }
            merge_rank.entry((left.clone(), right.clone())).or_insert(index);
        }
        Ok(Self {
            merges,
            alphabet,
            tokens,
            token_to_id,
            merge_rank,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn specials(&self) -> Specials {
        Specials::default()
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Encodes `text` without adding `bos`/`eos`.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut ids = Vec::new();
        for word in text.split_whitespace() {
            for sym in self.merge_word(word_symbols(word)) {
                ids.push(self.id_of(&sym).unwrap_or(UNK));
            }
        }
        ids
    }

    fn merge_word(&self, mut symbols: Vec<String>) -> Vec<String> {
        loop {
            let best = symbols
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| {
                    self.merge_rank
                        .get(&(w[0].clone(), w[1].clone()))
                        .map(|&rank| (rank, i))
                })
                .min();
            let Some((rank, _)) = best else {
                return symbols;
            };
            let (left, right) = &self.merges[rank];
            let mut out = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && &symbols[i] == left && &symbols[i + 1] == right {
                    out.push(format!("{left}{right}"));
                    i += 2;
                } else {
                    out.push(std::mem::take(&mut symbols[i]));
                    i += 1;
                }
            }
            symbols = out;
        }
    }

    /// Inverse of [`encode`](Self::encode) on text covered by the alphabet.
    /// Specials render as nothing, out-of-range and `unk` ids as U+FFFD.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            if id == UNK || id as usize >= self.tokens.len() {
                out.push_str(REPLACEMENT);
                continue;
            }
            if (id as usize) < NUM_SPECIALS {
                continue;
            }
            let tok = &self.tokens[id as usize];
            match tok.strip_suffix(END_OF_WORD) {
                Some(stem) => {
                    out.push_str(stem);
                    out.push(' ');
                }
                None => out.push_str(tok),
            }
        }
        if out.ends_with(' ') {
            out.pop();
        }
        out
    }

    pub fn to_json_string(&self) -> String {
        let file = VocabFile {
            merges: self.merges.clone(),
            specials: Specials::default(),
            alphabet: self.alphabet.clone(),
        };
        serde_json::to_string(&file).expect("vocabulary always serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: VocabFile = serde_json::from_str(text)?;
        Self::build(file.alphabet, file.merges)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|source| TokenizerError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| TokenizerError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }
}

fn word_symbols(word: &str) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    let last = chars.len().saturating_sub(1);
    chars
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if i == last {
                format!("{c}{END_OF_WORD}")
            } else {
                c.to_string()
            }
        })
        .collect()
}

/// Trains a vocabulary of at most `vocab_size` entries (specials included).
pub fn train_tokenizer<S: AsRef<str>>(corpus: &[S], vocab_size: usize) -> Result<SubwordVocab> {
    // word -> (first occurrence, count); first occurrence keeps iteration order stable
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut order: Vec<&str> = Vec::new();
    for text in corpus {
        for word in text.as_ref().split_whitespace() {
            let c = counts.entry(word).or_insert_with(|| {
                order.push(word);
                0
            });
            *c += 1;
        }
    }
    if order.is_empty() {
        return Err(TokenizerError::EmptyCorpus);
    }

    let mut words: Vec<(Vec<String>, usize)> =
        order.iter().map(|w| (word_symbols(w), counts[w])).collect();
    let alphabet: BTreeSet<String> = words.iter().flat_map(|(s, _)| s.iter().cloned()).collect();
    let alphabet: Vec<String> = alphabet.into_iter().collect();
    if vocab_size < NUM_SPECIALS + alphabet.len() {
        return Err(TokenizerError::VocabTooSmall {
            requested: vocab_size,
            alphabet: alphabet.len(),
        });
    }

    let mut known: BTreeSet<String> = alphabet.iter().cloned().collect();
    let mut merges = Vec::new();
    while NUM_SPECIALS + known.len() < vocab_size {
        let mut pair_counts: BTreeMap<(&str, &str), usize> = BTreeMap::new();
        for (symbols, count) in &words {
            for w in symbols.windows(2) {
                *pair_counts.entry((&w[0], &w[1])).or_default() += count;
            }
        }
        // BTreeMap iterates pairs in lexicographic order, so the first
        // maximum wins ties.
        let mut best: Option<((&str, &str), usize)> = None;
        for (pair, &c) in &pair_counts {
            if best.is_none_or(|(_, bc)| c > bc) {
                best = Some((*pair, c));
            }
        }
        let Some(((left, right), count)) = best else { break };
        if count < 2 {
            break;
        }
        let (left, right) = (left.to_string(), right.to_string());
        let merged = format!("{left}{right}");
        for (symbols, _) in &mut words {
            if symbols.len() < 2 {
                continue;
            }
            let mut out = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && symbols[i] == left && symbols[i + 1] == right {
                    out.push(merged.clone());
                    i += 2;
                } else {
                    out.push(std::mem::take(&mut symbols[i]));
                    i += 1;
                }
            }
            *symbols = out;
        }
        known.insert(merged);
        merges.push((left, right));
    }
    SubwordVocab::build(alphabet, merges)
}
