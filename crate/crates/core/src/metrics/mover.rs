//! Embedding-based mover similarity between two glosses.
//!
//! Each gloss becomes an idf-weighted bag of unigrams normalized to unit
//! mass. Token pairs cost `1 - cos(e_i, e_j)` (0 for identical tokens) and
//! the similarity is `1 - OT(hyp, ref)`. Instances where both sides have at
//! most [`EXACT_MAX_SIZE`] distinct tokens use the exact solver; larger ones
//! use Sinkhorn.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::revdict::cosine;
use super::{MetricError, Result};
use crate::ot::{solve_exact, solve_sinkhorn, SinkhornConfig, Solver, TransportProblem, EXACT_MAX_SIZE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OovPolicy {
    /// Drop tokens without an embedding and renormalize.
    #[default]
    Drop,
    /// Fail on the first token without an embedding.
    Strict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoverConfig {
    embeddings: HashMap<String, Vec<f64>>,
    idf: HashMap<String, f64>,
    pub epsilon: f64,
    pub oov: OovPolicy,
    /// No table: every token is embedded and distinct tokens are orthogonal.
    one_hot: bool,
}

impl MoverConfig {
    pub fn new(embeddings: HashMap<String, Vec<f64>>) -> Result<Self> {
        let mut dim = None;
        for v in embeddings.values() {
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => return Err(MetricError::TableDim(d, v.len())),
                _ => {}
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(MetricError::NonFinite("embedding table"));
            }
        }
        Ok(Self {
            embeddings,
            idf: HashMap::new(),
            epsilon: 0.01,
            oov: OovPolicy::Drop,
            one_hot: false,
        })
    }

    /// Table-free variant: token pairs cost 0 when equal and 1 otherwise, so
    /// the similarity is the idf-weighted unigram overlap.
    pub fn one_hot() -> Self {
        Self {
            embeddings: HashMap::new(),
            idf: HashMap::new(),
            epsilon: 0.01,
            oov: OovPolicy::Drop,
            one_hot: true,
        }
    }

    pub fn is_one_hot(&self) -> bool {
        self.one_hot
    }

    /// Sets idf weights; tokens absent from the map weigh 1.
    pub fn with_idf(mut self, idf: HashMap<String, f64>) -> Result<Self> {
        if idf.values().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(MetricError::NonFinite("idf weights"));
        }
        self.idf = idf;
        Ok(self)
    }

    pub fn with_policy(mut self, oov: OovPolicy) -> Self {
        self.oov = oov;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn embedding(&self, token: &str) -> Option<&[f64]> {
        self.embeddings.get(token).map(Vec::as_slice)
    }

    fn idf(&self, token: &str) -> f64 {
        self.idf.get(token).copied().unwrap_or(1.0)
    }

    /// Loads a JSON map `token -> [numbers]`.
    pub fn load_table(path: impl AsRef<Path>) -> std::io::Result<HashMap<String, Vec<f64>>> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }

    /// Loads a JSON map `token -> number`.
    pub fn load_idf(path: impl AsRef<Path>) -> std::io::Result<HashMap<String, f64>> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoverResult {
    pub similarity: f64,
    /// `None` when a side had no embedded tokens left; similarity is then 0.
    pub solver: Option<Solver>,
}

/// Sorted bag of embedded tokens with normalized idf mass.
fn distribution<'a>(tokens: &[&'a str], cfg: &MoverConfig) -> Result<Vec<(&'a str, f64)>> {
    let mut bag: BTreeMap<&str, f64> = BTreeMap::new();
    for &t in tokens {
        if !cfg.one_hot && cfg.embedding(t).is_none() {
            match cfg.oov {
                OovPolicy::Drop => continue,
                OovPolicy::Strict => return Err(MetricError::OutOfVocabulary(t.to_string())),
            }
        }
        *bag.entry(t).or_insert(0.0) += cfg.idf(t);
    }
    let total: f64 = bag.values().sum();
    if total <= 0.0 {
        return Ok(Vec::new());
    }
    Ok(bag.into_iter().map(|(t, w)| (t, w / total)).filter(|(_, w)| *w > 0.0).collect())
}

pub fn mover_sim(hyp: &[&str], reference: &[&str], cfg: &MoverConfig) -> Result<MoverResult> {
    let a = distribution(hyp, cfg)?;
    let b = distribution(reference, cfg)?;
    if a.is_empty() || b.is_empty() {
        return Ok(MoverResult {
            similarity: 0.0,
            solver: None,
        });
    }
    let mut cost = Vec::with_capacity(a.len());
    for (ta, _) in &a {
        let mut row = Vec::with_capacity(b.len());
        for (tb, _) in &b {
            let c = if ta == tb {
                0.0
            } else if cfg.one_hot {
                1.0
            } else {
                let ea = cfg.embedding(ta).expect("filtered");
                (1.0 - cosine(ea, cfg.embedding(tb).expect("filtered"))?).max(0.0)
            };
            row.push(c);
        }
        cost.push(row);
    }
    // renormalize so the sums are 1 to the last bit the validator cares about
    let problem = TransportProblem::new(
        a.iter().map(|x| x.1).collect(),
        b.iter().map(|x| x.1).collect(),
        cost,
    )?;
    let (transport, solver) = if a.len() <= EXACT_MAX_SIZE && b.len() <= EXACT_MAX_SIZE {
        (solve_exact(&problem)?, Solver::Exact)
    } else {
        let sk = SinkhornConfig {
            epsilon: cfg.epsilon,
            ..Default::default()
        };
        (solve_sinkhorn(&problem, sk)?, Solver::Sinkhorn)
    };
    Ok(MoverResult {
        similarity: 1.0 - transport.cost,
        solver: Some(solver),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::tokenize_gloss as tok;
    use crate::rng::SplitMix64;

    fn table(entries: &[(&str, &[f64])]) -> MoverConfig {
        MoverConfig::new(entries.iter().map(|(k, v)| (k.to_string(), v.to_vec())).collect()).unwrap()
    }

    fn random_table(rng: &mut SplitMix64, words: &[String], dim: usize) -> MoverConfig {
        MoverConfig::new(
            words
                .iter()
                .map(|w| (w.clone(), (0..dim).map(|_| rng.normal()).collect()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_glosses() {
        let cfg = table(&[("a", &[1.0, 0.0]), ("b", &[0.6, 0.8]), ("c", &[0.0, 1.0])]);
        let x = tok("a b c b");
        let r = mover_sim(&x, &x, &cfg).unwrap();
        assert_eq!(r.similarity, 1.0);
        assert_eq!(r.solver, Some(Solver::Exact));
    }

    #[test]
    fn orthogonal_single_tokens() {
        let cfg = table(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        let r = mover_sim(&tok("a"), &tok("b"), &cfg).unwrap();
        assert!(r.similarity.abs() < 1e-15);
    }

    #[test]
    fn one_hot_is_weighted_overlap() {
        let cfg = MoverConfig::one_hot();
        // hyp {a: 1/2, b: 1/2}, ref {a: 1/4, c: 3/4}: only 1/4 of the mass stays put
        let r = mover_sim(&tok("a b"), &tok("a c c c"), &cfg).unwrap();
        assert!((r.similarity - 0.25).abs() < 1e-12, "{}", r.similarity);
        assert_eq!(mover_sim(&tok("x y"), &tok("y x"), &cfg).unwrap().similarity, 1.0);
    }

    #[test]
    fn one_to_two_matches_enumeration() {
        // "a" must send half its mass to each of "b" and "c"; the only plan.
        let cfg = table(&[("a", &[1.0, 0.0]), ("b", &[0.6, 0.8]), ("c", &[-0.8, 0.6])]);
        let r = mover_sim(&tok("a"), &tok("b c"), &cfg).unwrap();
        let expected = 1.0 - (0.5 * (1.0 - 0.6) + 0.5 * (1.0 + 0.8));
        assert!((r.similarity - expected).abs() < 1e-12);
    }

    #[test]
    fn oov_policies() {
        let cfg = table(&[("a", &[1.0, 0.0])]);
        let r = mover_sim(&tok("a zz"), &tok("a"), &cfg).unwrap();
        assert_eq!(r.similarity, 1.0);
        let empty = mover_sim(&tok("zz"), &tok("a"), &cfg).unwrap();
        assert_eq!(empty, MoverResult { similarity: 0.0, solver: None });
        let strict = cfg.with_policy(OovPolicy::Strict);
        assert_eq!(
            mover_sim(&tok("a zz"), &tok("a"), &strict),
            Err(MetricError::OutOfVocabulary("zz".into()))
        );
    }

    #[test]
    fn idf_shifts_mass() {
        let cfg = table(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        let idf: HashMap<String, f64> = [("b".to_string(), 3.0)].into_iter().collect();
        let weighted = cfg.clone().with_idf(idf).unwrap();
        let plain = mover_sim(&tok("a b"), &tok("a"), &cfg).unwrap().similarity;
        let heavy = mover_sim(&tok("a b"), &tok("a"), &weighted).unwrap().similarity;
        assert!((plain - 0.5).abs() < 1e-12);
        assert!((heavy - 0.25).abs() < 1e-12);
    }

    #[test]
    fn table_dimension_checked() {
        let t: HashMap<String, Vec<f64>> =
            [("a".into(), vec![1.0]), ("b".into(), vec![1.0, 2.0])].into_iter().collect();
        assert!(matches!(MoverConfig::new(t), Err(MetricError::TableDim(..))));
    }

    #[test]
    fn long_glosses_use_sinkhorn() {
        let mut rng = SplitMix64::new(4);
        let words: Vec<String> = (0..30).map(|i| format!("w{i}")).collect();
        let cfg = random_table(&mut rng, &words, 8);
        let x: Vec<&str> = words[..12].iter().map(String::as_str).collect();
        let r = mover_sim(&x, &x, &cfg).unwrap();
        assert_eq!(r.solver, Some(Solver::Sinkhorn));
        let k = x.len() as f64;
        assert!((1.0 - r.similarity) <= 2.0 * cfg.epsilon * k.ln());
    }

    #[test]
    fn symmetric_and_permutation_invariant() {
        let mut rng = SplitMix64::new(8);
        let words: Vec<String> = (0..20).map(|i| format!("t{i}")).collect();
        let cfg = random_table(&mut rng, &words, 6);
        for _ in 0..50 {
            let draw = |rng: &mut SplitMix64, k: usize| -> Vec<&str> {
                (0..k).map(|_| words[rng.below(words.len())].as_str()).collect()
            };
            let len_h = 1 + rng.below(14);
            let len_r = 1 + rng.below(14);
            let h = draw(&mut rng, len_h);
            let r = draw(&mut rng, len_r);
            let hr = mover_sim(&h, &r, &cfg).unwrap();
            let rh = mover_sim(&r, &h, &cfg).unwrap();
            let tol = if hr.solver == Some(Solver::Exact) && rh.solver == Some(Solver::Exact) {
                1e-12
            } else {
                1e-6
            };
            assert!((hr.similarity - rh.similarity).abs() <= tol);
            let mut shuffled = h.clone();
            rng.shuffle(&mut shuffled);
            assert_eq!(mover_sim(&shuffled, &r, &cfg).unwrap(), hr);
        }
    }
}
