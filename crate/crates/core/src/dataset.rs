//! Dictionary datasets: one JSON array of entries per split.
//!
//! Each entry carries an identifier, the definiendum, its gloss, a part of
//! speech, and any subset of the `sgns`/`char`/`electra` vectors. Files are
//! validated on load; all problems are reported with the item index and the
//! offending key.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde_json::{Map, Value};

use crate::rng::SplitMix64;

/// Embedding architecture carried by a dataset column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ArchTag {
    Sgns,
    Char,
    Electra,
}

impl ArchTag {
    pub const ALL: [ArchTag; 3] = [ArchTag::Sgns, ArchTag::Char, ArchTag::Electra];

    pub fn as_str(self) -> &'static str {
        match self {
            ArchTag::Sgns => "sgns",
            ArchTag::Char => "char",
            ArchTag::Electra => "electra",
        }
    }
}

impl fmt::Display for ArchTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArchTag {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sgns" => Ok(ArchTag::Sgns),
            "char" => Ok(ArchTag::Char),
            "electra" => Ok(ArchTag::Electra),
            other => Err(DatasetError::UnknownArch(other.to_string())),
        }
    }
}

impl serde::Serialize for ArchTag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> serde::Deserialize<'de> for ArchTag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Part of speech. Only the four open classes are accepted.
///
/// Files use the short forms `n`, `v`, `adj`, `adv`; the long names are also
/// accepted on input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pos {
    Noun,
    Verb,
    Adjective,
    Adverb,
}

impl Pos {
    pub const ALL: [Pos; 4] = [Pos::Noun, Pos::Verb, Pos::Adjective, Pos::Adverb];

    pub fn as_str(self) -> &'static str {
        match self {
            Pos::Noun => "n",
            Pos::Verb => "v",
            Pos::Adjective => "adj",
            Pos::Adverb => "adv",
        }
    }

    fn parse(s: &str) -> Option<Pos> {
        match s {
            "n" | "noun" => Some(Pos::Noun),
            "v" | "verb" => Some(Pos::Verb),
            "adj" | "adjective" => Some(Pos::Adjective),
            "adv" | "adverb" => Some(Pos::Adverb),
            _ => None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("top-level value must be a JSON array")]
    NotArray,
    #[error("item {index}: expected a JSON object")]
    NotObject { index: usize },
    #[error("item {index}: missing required key \"{key}\"")]
    MissingKey { index: usize, key: String },
    #[error("item {index}: key \"{key}\" must be {expected}")]
    WrongType {
        index: usize,
        key: String,
        expected: &'static str,
    },
    #[error("item {index}: key \"{key}\" entry {position} is not a number")]
    NonNumeric {
        index: usize,
        key: String,
        position: usize,
    },
    #[error("item {index}: key \"{key}\" entry {position} is not finite")]
    NonFinite {
        index: usize,
        key: String,
        position: usize,
    },
    #[error("item {index}: key \"gloss\" is empty")]
    EmptyGloss { index: usize },
    #[error("item {index}: key \"pos\" has unsupported value \"{value}\"")]
    UnknownPos { index: usize, value: String },
    #[error("item {index}: key \"{key}\" has dimension {found}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        key: String,
        expected: usize,
        found: usize,
    },
    #[error("item {index}: duplicate id \"{id}\"")]
    DuplicateId { index: usize, id: String },
    #[error("unknown embedding architecture \"{0}\"")]
    UnknownArch(String),
    #[error("embedding architecture \"{0}\" is absent from the dataset")]
    MissingArch(ArchTag),
    #[error("cannot draw glosses from an empty vocabulary")]
    EmptyVocab,
}

pub type Result<T, E = DatasetError> = std::result::Result<T, E>;

/// One dictionary entry.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPoint {
    pub id: String,
    pub word: String,
    pub gloss: String,
    pub pos: Pos,
    pub embeddings: BTreeMap<ArchTag, Vec<f64>>,
    /// Keys outside the known schema, kept verbatim for round trips.
    pub extra: Map<String, Value>,
}

impl DataPoint {
    pub fn embedding(&self, tag: ArchTag) -> Option<&[f64]> {
        self.embeddings.get(&tag).map(Vec::as_slice)
    }

    fn to_value(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("id".into(), Value::String(self.id.clone()));
        obj.insert("word".into(), Value::String(self.word.clone()));
        obj.insert("gloss".into(), Value::String(self.gloss.clone()));
        obj.insert("pos".into(), Value::String(self.pos.as_str().into()));
        for (tag, vector) in &self.embeddings {
            obj.insert(tag.as_str().into(), Value::from(vector.clone()));
        }
        for (k, v) in &self.extra {
            obj.insert(k.clone(), v.clone());
        }
        Value::Object(obj)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub items: Vec<DataPoint>,
    pub language: String,
    pub declared_dim: BTreeMap<ArchTag, usize>,
}

impl Dataset {
    /// Builds a dataset from already-constructed entries, enforcing every
    /// invariant a file load would.
    pub fn from_items(items: Vec<DataPoint>, language: impl Into<String>) -> Result<Self> {
        let mut values = Vec::with_capacity(items.len());
        for item in &items {
            values.push(item.to_value());
        }
        let mut ds = parse_items(&values)?;
        ds.language = language.into();
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn dim(&self, tag: ArchTag) -> Option<usize> {
        self.declared_dim.get(&tag).copied()
    }

    pub fn has_arch(&self, tag: ArchTag) -> bool {
        self.declared_dim.contains_key(&tag)
    }

    /// All vectors of one architecture, in item order.
    pub fn vectors(&self, tag: ArchTag) -> Result<Vec<&[f64]>> {
        if !self.has_arch(tag) {
            return Err(DatasetError::MissingArch(tag));
        }
        Ok(self
            .items
            .iter()
            .map(|it| it.embedding(tag).expect("coverage checked on load"))
            .collect())
    }

    pub fn index_by_id(&self) -> HashMap<&str, usize> {
        self.items
            .iter()
            .enumerate()
            .map(|(i, it)| (it.id.as_str(), i))
            .collect()
    }

    pub fn to_json_string(&self) -> String {
        let values: Vec<Value> = self.items.iter().map(DataPoint::to_value).collect();
        serde_json::to_string(&Value::Array(values)).expect("dataset values always serialize")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        let Value::Array(values) = value else {
            return Err(DatasetError::NotArray);
        };
        parse_items(&values)
    }
}

/// Reads and validates a dataset file.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Dataset::from_json_str(&text)
}

fn parse_items(values: &[Value]) -> Result<Dataset> {
    let mut items = Vec::with_capacity(values.len());
    let mut seen = HashSet::new();
    let mut declared_dim: BTreeMap<ArchTag, usize> = BTreeMap::new();

    for (index, value) in values.iter().enumerate() {
        let Value::Object(obj) = value else {
            return Err(DatasetError::NotObject { index });
        };
        let text_field = |key: &str| -> Result<String> {
            match obj.get(key) {
                None => Err(DatasetError::MissingKey {
                    index,
                    key: key.into(),
                }),
                Some(Value::String(s)) => Ok(s.clone()),
                Some(_) => Err(DatasetError::WrongType {
                    index,
                    key: key.into(),
                    expected: "a string",
                }),
            }
        };
        let id = text_field("id")?;
        let word = text_field("word")?;
        let gloss = text_field("gloss")?;
        let pos_raw = text_field("pos")?;
        if gloss.trim().is_empty() {
            return Err(DatasetError::EmptyGloss { index });
        }
        let pos = Pos::parse(&pos_raw).ok_or(DatasetError::UnknownPos {
            index,
            value: pos_raw,
        })?;

        let mut embeddings = BTreeMap::new();
        for tag in ArchTag::ALL {
            let key = tag.as_str();
            let Some(raw) = obj.get(key) else { continue };
            let vector = parse_vector(index, key, raw)?;
            match declared_dim.get(&tag) {
                Some(&expected) if expected != vector.len() => {
                    return Err(DatasetError::DimensionMismatch {
                        index,
                        key: key.into(),
                        expected,
                        found: vector.len(),
                    });
                }
                Some(_) => {}
                None if index > 0 => {
                    // earlier items lacked this architecture
                    return Err(DatasetError::MissingKey {
                        index: 0,
                        key: key.into(),
                    });
                }
                None => {
                    declared_dim.insert(tag, vector.len());
                }
            }
            embeddings.insert(tag, vector);
        }
        if let Some(tag) = declared_dim.keys().find(|t| !embeddings.contains_key(t)) {
            return Err(DatasetError::MissingKey {
                index,
                key: tag.as_str().into(),
            });
        }

        if !seen.insert(id.clone()) {
            return Err(DatasetError::DuplicateId { index, id });
        }

        let extra = obj
            .iter()
            .filter(|(k, _)| !is_known_key(k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();

        items.push(DataPoint {
            id,
            word,
            gloss,
            pos,
            embeddings,
            extra,
        });
    }

    let language = items
        .first()
        .and_then(|it| it.id.split_once('.'))
        .map(|(lang, _)| lang.to_string())
        .unwrap_or_default();

    Ok(Dataset {
        items,
        language,
        declared_dim,
    })
}

fn is_known_key(key: &str) -> bool {
    matches!(
        key,
        "id" | "word" | "gloss" | "pos" | "sgns" | "char" | "electra"
    )
}

fn parse_vector(index: usize, key: &str, raw: &Value) -> Result<Vec<f64>> {
    let Value::Array(entries) = raw else {
        return Err(DatasetError::WrongType {
            index,
            key: key.into(),
            expected: "an array of numbers",
        });
    };
    if entries.is_empty() {
        return Err(DatasetError::WrongType {
            index,
            key: key.into(),
            expected: "a non-empty array of numbers",
        });
    }
    entries
        .iter()
        .enumerate()
        .map(|(position, v)| {
            let x = v.as_f64().ok_or(DatasetError::NonNumeric {
                index,
                key: key.into(),
                position,
            })?;
            if !x.is_finite() {
                return Err(DatasetError::NonFinite {
                    index,
                    key: key.into(),
                    position,
                });
            }
            Ok(x)
        })
        .collect()
}

/// A pair of items, one from each split, whose vectors coincide.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Collision {
    pub a_index: usize,
    pub b_index: usize,
    pub a_id: String,
    pub b_id: String,
}

/// Finds every `(i, j)` with `a[i]` and `b[j]` equal component-wise within
/// `tol` for architecture `tag`. `tol == 0` means bitwise equality.
pub fn check_split_disjointness(
    a: &Dataset,
    b: &Dataset,
    tag: ArchTag,
    tol: f64,
) -> Result<Vec<Collision>> {
    let va = a.vectors(tag)?;
    let vb = b.vectors(tag)?;
    let mut out = Vec::new();
    let mut push = |i: usize, j: usize| {
        out.push(Collision {
            a_index: i,
            b_index: j,
            a_id: a.items[i].id.clone(),
            b_id: b.items[j].id.clone(),
        })
    };

    if tol == 0.0 {
        let mut buckets: HashMap<Vec<u64>, Vec<usize>> = HashMap::new();
        for (j, v) in vb.iter().enumerate() {
            buckets.entry(bits(v)).or_default().push(j);
        }
        for (i, v) in va.iter().enumerate() {
            if let Some(js) = buckets.get(&bits(v)) {
                for &j in js {
                    push(i, j);
                }
            }
        }
    } else {
        for (i, u) in va.iter().enumerate() {
            for (j, v) in vb.iter().enumerate() {
                if u.len() == v.len() && u.iter().zip(v.iter()).all(|(x, y)| (x - y).abs() <= tol) {
                    push(i, j);
                }
            }
        }
    }
    Ok(out)
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// Deterministic synthetic dataset with `sgns` and `char` columns of size
/// `dim`. Glosses are 2 to 30 tokens drawn uniformly from `vocab`; vectors
/// are i.i.d. standard normal.
pub fn gen_synthetic(seed: u64, n: usize, dim: usize, vocab: &[&str]) -> Result<Dataset> {
    assert!(dim >= 1, "dimension must be positive");
    if n > 0 && vocab.is_empty() {
        return Err(DatasetError::EmptyVocab);
    }
    let mut rng = SplitMix64::new(seed);
    let mut items = Vec::with_capacity(n);
    for i in 0..n {
        let word = vocab[rng.below(vocab.len())].to_string();
        let len = 2 + rng.below(29);
        let gloss = (0..len)
            .map(|_| vocab[rng.below(vocab.len())])
            .collect::<Vec<_>>()
            .join(" ");
        let pos = Pos::ALL[rng.below(Pos::ALL.len())];
        let mut embeddings = BTreeMap::new();
        for tag in [ArchTag::Sgns, ArchTag::Char] {
            embeddings.insert(tag, (0..dim).map(|_| rng.normal()).collect());
        }
        items.push(DataPoint {
            id: format!("syn.{i}"),
            word,
            gloss,
            pos,
            embeddings,
            extra: Map::new(),
        });
    }
    let declared_dim = if n > 0 {
        [(ArchTag::Sgns, dim), (ArchTag::Char, dim)].into_iter().collect()
    } else {
        BTreeMap::new()
    };
    Ok(Dataset {
        items,
        language: "syn".into(),
        declared_dim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG3: &str = r#"[{
        "id": "it.42",
        "word": "sminuire",
        "gloss": "far figurare qualcosa o qualcuno come meno importante o rilevante",
        "pos": "v",
        "electra": [0.4, 0.2, 0.1],
        "sgns": [0.2, 0.4, 0.5],
        "char": [0.3, 1.4, 0.9]
    }]"#;

    fn vocab() -> Vec<&'static str> {
        "the a of to in is that for it as with was on be by"
            .split(' ')
            .collect()
    }

    #[test]
    fn loads_reference_entry() {
        let ds = Dataset::from_json_str(FIG3).unwrap();
        assert_eq!(ds.len(), 1);
        let it = &ds.items[0];
        assert_eq!(it.id, "it.42");
        assert_eq!(it.word, "sminuire");
        assert_eq!(it.pos, Pos::Verb);
        assert_eq!(it.embeddings.len(), 3);
        assert_eq!(ds.language, "it");
        assert_eq!(ds.dim(ArchTag::Electra), Some(3));
    }

    #[test]
    fn empty_array() {
        let ds = Dataset::from_json_str("[]").unwrap();
        assert!(ds.is_empty());
        assert!(ds.declared_dim.is_empty());
    }

    #[test]
    fn duplicate_id_is_named() {
        let text = r#"[{"id":"en.1","word":"a","gloss":"x","pos":"n"},
                       {"id":"en.1","word":"b","gloss":"y","pos":"n"}]"#;
        let err = Dataset::from_json_str(text).unwrap_err();
        assert!(matches!(&err, DatasetError::DuplicateId { index: 1, id } if id == "en.1"));
        assert!(err.to_string().contains("en.1"));
    }

    #[test]
    fn rejects_each_invariant_violation() {
        let cases = [
            (r#"{"a":1}"#, "array"),
            (r#"[1]"#, "object"),
            (r#"[{"id":"x","word":"w","pos":"n"}]"#, "\"gloss\""),
            (r#"[{"id":"x","word":"w","gloss":"  ","pos":"n"}]"#, "empty"),
            (r#"[{"id":"x","word":"w","gloss":"g","pos":"det"}]"#, "det"),
            (r#"[{"id":"x","word":"w","gloss":"g","pos":"n","sgns":[1,"a"]}]"#, "entry 1"),
            (r#"[{"id":"x","word":"w","gloss":"g","pos":"n","sgns":[1,2]},
                 {"id":"y","word":"w","gloss":"g","pos":"n","sgns":[1]}]"#, "dimension 1"),
            (r#"[{"id":"x","word":"w","gloss":"g","pos":"n","sgns":[1,2]},
                 {"id":"y","word":"w","gloss":"g","pos":"n"}]"#, "\"sgns\""),
            (r#"[{"id":1,"word":"w","gloss":"g","pos":"n"}]"#, "string"),
            ("[{", "malformed"),
        ];
        for (text, needle) in cases {
            let err = Dataset::from_json_str(text).unwrap_err().to_string();
            assert!(err.contains(needle), "{text}: {err}");
        }
    }

    #[test]
    fn extra_keys_survive_round_trip() {
        let text = r#"[{"id":"en.1","word":"a","gloss":"x","pos":"adv","freq":3,"sgns":[1.5]}]"#;
        let ds = Dataset::from_json_str(text).unwrap();
        assert_eq!(ds.items[0].extra["freq"], 3);
        let again = Dataset::from_json_str(&ds.to_json_string()).unwrap();
        assert_eq!(ds, again);
        // key order: id, word, gloss, pos, vectors, extras
        assert_eq!(
            ds.to_json_string(),
            r#"[{"id":"en.1","word":"a","gloss":"x","pos":"adv","sgns":[1.5],"freq":3}]"#
        );
    }

    #[test]
    fn synthetic_is_deterministic_and_valid() {
        let v = vocab();
        assert!(gen_synthetic(7, 0, 4, &v).unwrap().is_empty());
        let a = gen_synthetic(7, 500, 16, &v).unwrap();
        let b = gen_synthetic(7, 500, 16, &v).unwrap();
        assert_eq!(a.to_json_string(), b.to_json_string());
        assert_eq!(a.len(), 500);
        let reloaded = Dataset::from_json_str(&a.to_json_string()).unwrap();
        assert_eq!(reloaded.items, a.items);
        for it in &a.items {
            let n = it.gloss.split_whitespace().count();
            assert!((2..=30).contains(&n));
        }
        assert!(matches!(gen_synthetic(1, 3, 4, &[]), Err(DatasetError::EmptyVocab)));
    }

    #[test]
    fn disjointness() {
        let v = vocab();
        let a = gen_synthetic(1, 60, 8, &v).unwrap();
        let b = gen_synthetic(2, 70, 8, &v).unwrap();
        assert!(check_split_disjointness(&a, &b, ArchTag::Sgns, 0.0).unwrap().is_empty());

        let self_overlap = check_split_disjointness(&a, &a, ArchTag::Sgns, 0.0).unwrap();
        assert!(self_overlap.len() >= a.len());

        let mut b2 = b.clone();
        b2.items[13].embeddings.insert(ArchTag::Sgns, a.items[5].embeddings[&ArchTag::Sgns].clone());
        for tol in [0.0, 1e-9] {
            let hits = check_split_disjointness(&a, &b2, ArchTag::Sgns, tol).unwrap();
            // exhaustive oracle
            let mut expected = Vec::new();
            for (i, x) in a.items.iter().enumerate() {
                for (j, y) in b2.items.iter().enumerate() {
                    if x.embeddings[&ArchTag::Sgns] == y.embeddings[&ArchTag::Sgns] {
                        expected.push((i, j));
                    }
                }
            }
            let got: Vec<_> = hits.iter().map(|c| (c.a_index, c.b_index)).collect();
            assert_eq!(got, expected);
            assert_eq!(got, vec![(5, 13)]);
        }
        assert!(matches!(
            check_split_disjointness(&a, &b, ArchTag::Electra, 0.0),
            Err(DatasetError::MissingArch(ArchTag::Electra))
        ));
    }
}
