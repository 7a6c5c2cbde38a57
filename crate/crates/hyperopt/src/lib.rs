//! Sequential Bayesian optimization: a shifted Halton design for the first
//! trials, then a Gaussian process with expected improvement maximized over
//! seeded random candidates. Objectives are minimized.

pub mod gp;
pub mod space;

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use glossbench_core::SplitMix64;

pub use gp::GaussianProcess;
pub use space::{ParamKind, ParamSpec, Scale, SearchSpace};

pub const DEFAULT_INIT: usize = 10;
pub const CANDIDATES: usize = 1024;

#[derive(Debug, thiserror::Error)]
pub enum HyperoptError {
    #[error("search space has no parameters")]
    EmptySpace,
    #[error("parameter {0}: lower must be below upper (and positive on log scale)")]
    BadBounds(String),
    #[error("need budget >= init_count >= 1 (budget {budget}, init {init})")]
    Budget { budget: usize, init: usize },
    #[error("gaussian process: {0}")]
    Gp(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = HyperoptError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    /// Unit-cube coordinates, snapped onto integer and boolean values.
    pub point: Vec<f64>,
    pub config: Map<String, Value>,
    pub objective: f64,
    /// The objective was not finite; `objective` holds the penalty.
    #[serde(default)]
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suggestion {
    pub point: Vec<f64>,
    pub config: Map<String, Value>,
}

fn primes(n: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(n);
    let mut c = 2u64;
    while out.len() < n {
        if out.iter().all(|p| c % p != 0) {
            out.push(c);
        }
        c += 1;
    }
    out
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let (mut inv, mut f) = (0.0, 1.0 / base as f64);
    while i > 0 {
        inv += (i % base) as f64 * f;
        i /= base;
        f /= base as f64;
    }
    inv
}

/// Element `index` of the Halton sequence, rotated by a seeded shift (mod 1).
pub fn shifted_halton(index: usize, dims: usize, seed: u64) -> Vec<f64> {
    let mut rng = SplitMix64::new(seed ^ 0x4861_6c74_6f6e);
    let shift: Vec<f64> = (0..dims).map(|_| rng.next_f64()).collect();
    primes(dims)
        .into_iter()
        .zip(shift)
        .map(|(b, s)| (radical_inverse(index as u64 + 1, b) + s).fract())
        .collect()
}

fn candidate_rng(seed: u64, round: usize) -> SplitMix64 {
    SplitMix64::new(seed.wrapping_add((round as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

/// Next configuration to evaluate given `history`, with the default
/// ten-point initial design.
pub fn suggest(history: &[TrialRecord], space: &SearchSpace, seed: u64) -> Result<Suggestion> {
    suggest_with(history, space, seed, DEFAULT_INIT)
}

pub fn suggest_with(history: &[TrialRecord], space: &SearchSpace, seed: u64, init_count: usize) -> Result<Suggestion> {
    space.validate()?;
    let dims = space.dims();
    let raw = if history.len() < init_count {
        shifted_halton(history.len(), dims, seed)
    } else {
        let x: Vec<Vec<f64>> = history.iter().map(|t| t.point.clone()).collect();
        let y: Vec<f64> = history.iter().map(|t| t.objective).collect();
        let gp = GaussianProcess::fit(&x, &y)?;
        let best = y.iter().copied().fold(f64::INFINITY, f64::min);
        let mut rng = candidate_rng(seed, history.len());
        let mut arg = None;
        let mut arg_ei = f64::NEG_INFINITY;
        for _ in 0..CANDIDATES {
            let cand: Vec<f64> = (0..dims).map(|_| rng.next_f64()).collect();
            let (_, snapped) = space.decode(&cand);
            let ei = gp.expected_improvement(&snapped, best);
            if ei > arg_ei {
                arg_ei = ei;
                arg = Some(cand);
            }
        }
        arg.expect("at least one candidate")
    };
    let (config, point) = space.decode(&raw);
    Ok(Suggestion { point, config })
}

/// Penalty for a failed trial: worst finite value so far plus their spread.
pub fn failure_penalty(history: &[TrialRecord]) -> f64 {
    let finite: Vec<f64> = history.iter().filter(|t| !t.failed).map(|t| t.objective).collect();
    if finite.is_empty() {
        return 1.0;
    }
    let worst = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let least = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = if worst > least { worst - least } else { 1.0 };
    worst + spread
}

/// Records an objective value, substituting the penalty when it is not finite.
pub fn record(history: &mut Vec<TrialRecord>, s: Suggestion, value: f64) {
    let failed = !value.is_finite();
    let objective = if failed { failure_penalty(history) } else { value };
    history.push(TrialRecord {
        point: s.point,
        config: s.config,
        objective,
        failed,
    });
}

/// Lowest non-failed trial (any trial if all failed).
pub fn best_trial(history: &[TrialRecord]) -> Option<&TrialRecord> {
    let pick = |ok: bool| {
        history
            .iter()
            .filter(|t| ok || !t.failed)
            .min_by(|a, b| a.objective.total_cmp(&b.objective))
    };
    pick(false).or_else(|| pick(true))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    pub best: TrialRecord,
    pub history: Vec<TrialRecord>,
}

/// Evaluates exactly `budget` configurations and returns the best.
pub fn optimize<F>(mut objective: F, space: &SearchSpace, budget: usize, init_count: usize, seed: u64) -> Result<OptimizeResult>
where
    F: FnMut(&Map<String, Value>) -> f64,
{
    if !(budget >= init_count && init_count >= 1) {
        return Err(HyperoptError::Budget { budget, init: init_count });
    }
    let mut history = Vec::with_capacity(budget);
    for _ in 0..budget {
        let s = suggest_with(&history, space, seed, init_count)?;
        let v = objective(&s.config);
        record(&mut history, s, v);
    }
    let best = best_trial(&history).cloned().expect("budget >= 1");
    Ok(OptimizeResult { best, history })
}

/// Uniform random search with the same bookkeeping, for comparison.
pub fn random_search<F>(mut objective: F, space: &SearchSpace, budget: usize, seed: u64) -> Result<OptimizeResult>
where
    F: FnMut(&Map<String, Value>) -> f64,
{
    space.validate()?;
    if budget == 0 {
        return Err(HyperoptError::Budget { budget, init: 1 });
    }
    let mut rng = SplitMix64::new(seed);
    let mut history = Vec::with_capacity(budget);
    for _ in 0..budget {
        let raw: Vec<f64> = (0..space.dims()).map(|_| rng.next_f64()).collect();
        let (config, point) = space.decode(&raw);
        let v = objective(&config);
        record(&mut history, Suggestion { point, config }, v);
    }
    let best = best_trial(&history).cloned().expect("budget >= 1");
    Ok(OptimizeResult { best, history })
}

/// Persistent trial log, so an interrupted search can resume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLog {
    pub space: SearchSpace,
    pub seed: u64,
    pub init_count: usize,
    pub trials: Vec<TrialRecord>,
}

impl TrialLog {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
