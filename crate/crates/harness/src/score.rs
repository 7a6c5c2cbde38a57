//! Track scoring pipelines: a validated submission against a reference split.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use glossbench_core::metrics::bleu::{lemma_bleu, sense_bleu, BleuConfig};
use glossbench_core::metrics::mover::{mover_sim, MoverConfig, OovPolicy};
use glossbench_core::metrics::revdict::{score_revdict, VectorBatch};
use glossbench_core::metrics::tokenize_gloss;
use glossbench_core::ot::Solver;
use glossbench_core::{ArchTag, Dataset};

use crate::submission::{gloss_of, validate_submission, vector_of, Submission, Track};
use crate::{HarnessError, Result};

/// Metric settings shared by the CLI and the service, so that both produce
/// the same report for the same submission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    /// Include per-item values in reports.
    pub per_item: bool,
    /// Worker threads for the rank metric; results do not depend on it.
    pub threads: usize,
    pub bleu: BleuConfig,
    /// Token embedding table for mover similarity. Without one, distinct
    /// tokens are treated as orthogonal.
    pub embeddings: Option<PathBuf>,
    pub idf: Option<PathBuf>,
    pub oov: OovPolicy,
    pub epsilon: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            per_item: false,
            threads: 1,
            bleu: BleuConfig::default(),
            embeddings: None,
            idf: None,
            oov: OovPolicy::Drop,
            epsilon: 0.01,
        }
    }
}

/// Loaded, ready-to-use scoring resources.
#[derive(Debug, Clone)]
pub struct Scorer {
    pub config: MetricsConfig,
    mover: MoverConfig,
}

impl Scorer {
    pub fn new(config: MetricsConfig) -> Result<Self> {
        let mut mover = match &config.embeddings {
            Some(path) => MoverConfig::new(MoverConfig::load_table(path).map_err(|e| HarnessError::io(path, e))?)?,
            None => MoverConfig::one_hot(),
        };
        if let Some(path) = &config.idf {
            mover = mover.with_idf(MoverConfig::load_idf(path).map_err(|e| HarnessError::io(path, e))?)?;
        }
        let mover = mover.with_policy(config.oov).with_epsilon(config.epsilon);
        Ok(Self { config, mover })
    }

    /// Validates, then scores. Per-item values follow reference order and
    /// aggregates are unweighted means.
    pub fn score(&self, sub: &Submission, reference: &Dataset) -> Result<ScoreReport> {
        let validation = validate_submission(sub, reference);
        if !validation.is_valid() {
            return Err(HarnessError::InvalidSubmission(Box::new(validation)));
        }
        let mut report = ScoreReport {
            submission_id: sub.id.clone(),
            participant: sub.participant.clone(),
            track: sub.track,
            language: sub.language.clone(),
            arch: sub.arch,
            metrics: BTreeMap::new(),
            per_item: None,
            flags: Flags::default(),
        };
        let per_item = match sub.track {
            Track::Revdict => self.revdict(sub, reference, &mut report)?,
            Track::Defmod => self.defmod(sub, reference, &mut report)?,
        };
        if self.config.per_item {
            report.per_item = Some(per_item);
        }
        Ok(report)
    }

    fn revdict(&self, sub: &Submission, reference: &Dataset, report: &mut ScoreReport) -> Result<PerItem> {
        let arch: ArchTag = sub.arch.expect("validated arch");
        let preds: Vec<Vec<f64>> = reference.items.iter().map(|d| vector_of(sub, &d.id)).collect();
        let targets = reference.vectors(arch)?;
        let s = score_revdict(
            &VectorBatch::from_rows(&preds)?,
            &VectorBatch::from_rows(&targets)?,
            self.config.threads.max(1),
        )?;
        report.metrics.insert("mse".into(), s.mean_mse);
        report.metrics.insert("cosine".into(), s.mean_cosine);
        report.metrics.insert("rank".into(), s.mean_rank);
        report.flags.zero_norm_predictions = s.zero_norm_predictions.iter().map(|&i| reference.items[i].id.clone()).collect();
        Ok(PerItem {
            ids: reference.items.iter().map(|d| d.id.clone()).collect(),
            values: BTreeMap::from([("mse".into(), s.mse), ("cosine".into(), s.cosine), ("rank".into(), s.rank)]),
        })
    }

    fn defmod(&self, sub: &Submission, reference: &Dataset, report: &mut ScoreReport) -> Result<PerItem> {
        let tokens: Vec<Vec<&str>> = reference.items.iter().map(|d| tokenize_gloss(&d.gloss)).collect();
        let mut by_word: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, d) in reference.items.iter().enumerate() {
            by_word.entry(d.word.as_str()).or_default().push(i);
        }
        let n = reference.len();
        let (mut sb, mut lb, mut mv) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for (i, d) in reference.items.iter().enumerate() {
            let hyp = tokenize_gloss(gloss_of(sub, &d.id));
            sb.push(sense_bleu(&hyp, &tokens[i], self.config.bleu)?);
            let group = by_word[d.word.as_str()].iter().map(|&j| tokens[j].as_slice());
            lb.push(lemma_bleu(&hyp, group, self.config.bleu)?);
            let m = mover_sim(&hyp, &tokens[i], &self.mover)?;
            match m.solver {
                Some(Solver::Exact) => report.flags.exact_solves += 1,
                Some(Solver::Sinkhorn) => report.flags.sinkhorn_solves += 1,
                None => report.flags.empty_after_oov.push(d.id.clone()),
            }
            mv.push(m.similarity);
            if tokens[i].len() < self.config.bleu.max_order {
                report.flags.degenerate_references.push(d.id.clone());
            }
        }
        report.flags.mover_table = Some(if self.mover.is_one_hot() { "one_hot" } else { "embeddings" }.into());
        report.metrics.insert("sense_bleu".into(), mean(&sb));
        report.metrics.insert("lemma_bleu".into(), mean(&lb));
        report.metrics.insert("mover_sim".into(), mean(&mv));
        Ok(PerItem {
            ids: reference.items.iter().map(|d| d.id.clone()).collect(),
            values: BTreeMap::from([("sense_bleu".into(), sb), ("lemma_bleu".into(), lb), ("mover_sim".into(), mv)]),
        })
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerItem {
    pub ids: Vec<String>,
    pub values: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Flags {
    /// Revdict predictions with zero norm; their cosine counts as 0.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub zero_norm_predictions: Vec<String>,
    /// References shorter than the BLEU order, scored with smoothing.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub degenerate_references: Vec<String>,
    /// Items where a side had no embedded token left; mover similarity is 0.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub empty_after_oov: Vec<String>,
    #[serde(skip_serializing_if = "is_zero")]
    pub exact_solves: usize,
    #[serde(skip_serializing_if = "is_zero")]
    pub sinkhorn_solves: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mover_table: Option<String>,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub submission_id: String,
    pub participant: String,
    pub track: Track,
    pub language: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arch: Option<ArchTag>,
    pub metrics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_item: Option<PerItem>,
    #[serde(default)]
    pub flags: Flags,
}

impl ScoreReport {
    /// Canonical serialization used by every output path.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}
