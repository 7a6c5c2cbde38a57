//! Submission files and their validation against a reference split.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use glossbench_core::{ArchTag, Dataset};

use crate::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Track {
    Defmod,
    Revdict,
}

impl Track {
    pub fn as_str(self) -> &'static str {
        match self {
            Track::Defmod => "defmod",
            Track::Revdict => "revdict",
        }
    }

    /// Metric names in report order, with whether larger is better.
    pub fn metrics(self) -> &'static [(&'static str, bool)] {
        match self {
            Track::Defmod => &[("sense_bleu", true), ("lemma_bleu", true), ("mover_sim", true)],
            Track::Revdict => &[("mse", false), ("cosine", true), ("rank", false)],
        }
    }
}

impl fmt::Display for Track {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Track {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "defmod" => Ok(Track::Defmod),
            "revdict" => Ok(Track::Revdict),
            other => Err(HarnessError::Invalid(format!("unknown track \"{other}\""))),
        }
    }
}


/// One participant's predictions for a track. Items map a reference id to a
/// gloss string (defmod) or a vector (revdict); they are kept as raw JSON so
/// that type errors can be reported per item instead of failing the parse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub id: String,
    pub participant: String,
    pub track: Track,
    pub language: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arch: Option<ArchTag>,
    #[serde(default)]
    pub timestamp: String,
    pub items: BTreeMap<String, Value>,
}

impl Submission {
    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&crate::read_file(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("submission serializes") + "\n"
    }
}

/// Submission ids become file names, so they are restricted to a safe set.
pub fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeError {
    pub id: String,
    pub expected: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionError {
    pub id: String,
    pub expected: usize,
    pub found: usize,
}

/// Everything wrong with a submission; it is valid iff every list is empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// In reference order.
    pub missing_ids: Vec<String>,
    pub extra_ids: Vec<String>,
    pub type_errors: Vec<TypeError>,
    pub dimension_errors: Vec<DimensionError>,
    pub other: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.missing_ids.is_empty()
            && self.extra_ids.is_empty()
            && self.type_errors.is_empty()
            && self.dimension_errors.is_empty()
            && self.other.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

pub fn validate_submission(sub: &Submission, reference: &Dataset) -> ValidationReport {
    let mut report = ValidationReport::default();
    if !valid_id(&sub.id) {
        report
            .other
            .push(format!("submission id \"{}\" must be 1-128 characters of [A-Za-z0-9._-] and not start with '.'", sub.id));
    }
    if sub.participant.trim().is_empty() {
        report.other.push("participant is empty".into());
    }
    if sub.language != reference.language {
        report.other.push(format!(
            "language \"{}\" does not match the reference language \"{}\"",
            sub.language, reference.language
        ));
    }
    let dim = match (sub.track, sub.arch) {
        (Track::Revdict, None) => {
            report.other.push("revdict submissions must name an arch".into());
            None
        }
        (_, Some(a)) if !reference.has_arch(a) => {
            report.other.push(format!("arch \"{a}\" is absent from the reference"));
            None
        }
        (Track::Revdict, Some(a)) => reference.dim(a),
        (Track::Defmod, _) => None,
    };

    let known: BTreeSet<&str> = reference.items.iter().map(|d| d.id.as_str()).collect();
    for d in &reference.items {
        if !sub.items.contains_key(&d.id) {
            report.missing_ids.push(d.id.clone());
        }
    }
    for (id, value) in &sub.items {
        if !known.contains(id.as_str()) {
            report.extra_ids.push(id.clone());
            continue;
        }
        match sub.track {
            Track::Defmod => {
                if !value.is_string() {
                    report.type_errors.push(TypeError {
                        id: id.clone(),
                        expected: "gloss string".into(),
                    });
                }
            }
            Track::Revdict => match value.as_array() {
                Some(xs) if xs.iter().all(|x| x.as_f64().is_some_and(f64::is_finite)) => {
                    if let Some(expected) = dim {
                        if xs.len() != expected {
                            report.dimension_errors.push(DimensionError {
                                id: id.clone(),
                                expected,
                                found: xs.len(),
                            });
                        }
                    }
                }
                _ => report.type_errors.push(TypeError {
                    id: id.clone(),
                    expected: "array of finite numbers".into(),
                }),
            },
        }
    }
    report
}

/// The gloss predicted for `id`; only meaningful after validation.
pub(crate) fn gloss_of<'a>(sub: &'a Submission, id: &str) -> &'a str {
    sub.items[id].as_str().expect("validated gloss")
}

pub(crate) fn vector_of(sub: &Submission, id: &str) -> Vec<f64> {
    sub.items[id]
        .as_array()
        .expect("validated vector")
        .iter()
        .map(|x| x.as_f64().expect("validated number"))
        .collect()
}
