//! Leaderboard aggregation by average best rank.
//!
//! Within a setup every submission is ranked on each metric (ties share the
//! lowest rank), each participant keeps their best rank per metric, and the
//! final score is the mean of those best ranks.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use glossbench_core::ArchTag;

use crate::score::ScoreReport;
use crate::submission::Track;

pub const TIE_RULE: &str = "competition (min): tied values share the lowest rank and the next rank is skipped";
pub const PER_SETUP: &str = "per_setup";
pub const POOLED: &str = "pooled_languages";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub participant: String,
    /// Position by average rank, ties sharing the lowest position.
    pub position: usize,
    pub average_rank: f64,
    pub best_ranks: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub participant: String,
    pub missing_metrics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetupBoard {
    pub scope: String,
    pub track: Track,
    /// `None` in the pooled view.
    #[serde(default)]
    pub language: Option<String>,
    #[serde(default)]
    pub arch: Option<ArchTag>,
    pub submissions: usize,
    pub entries: Vec<Entry>,
    pub excluded: Vec<Exclusion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub tie_rule: String,
    pub setups: Vec<SetupBoard>,
    pub pooled: Vec<SetupBoard>,
}

impl Leaderboard {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("leaderboard serializes") + "\n"
    }

    /// The per-setup board for `(track, language, arch)`.
    pub fn setup(&self, track: Track, language: &str, arch: Option<ArchTag>) -> Option<&SetupBoard> {
        self.setups
            .iter()
            .find(|s| s.track == track && s.language.as_deref() == Some(language) && s.arch == arch)
    }
}

/// Competition ranks of `values`; `higher_better` flips the order.
pub fn competition_ranks(values: &[f64], higher_better: bool) -> Vec<usize> {
    values
        .iter()
        .map(|&v| {
            1 + values
                .iter()
                .filter(|&&w| if higher_better { w > v } else { w < v })
                .count()
        })
        .collect()
}

fn metric_value(r: &ScoreReport, name: &str) -> Option<f64> {
    r.metrics.get(name).copied().filter(|v| v.is_finite())
}

fn board(scope: &str, track: Track, language: Option<String>, arch: Option<ArchTag>, reports: &[&ScoreReport]) -> SetupBoard {
    let participants: BTreeSet<&str> = reports.iter().map(|r| r.participant.as_str()).collect();
    let mut best: BTreeMap<&str, BTreeMap<String, usize>> = participants.iter().map(|&p| (p, BTreeMap::new())).collect();
    for &(metric, higher_better) in track.metrics() {
        let scored: Vec<(&str, f64)> = reports
            .iter()
            .filter_map(|r| metric_value(r, metric).map(|v| (r.participant.as_str(), v)))
            .collect();
        let values: Vec<f64> = scored.iter().map(|s| s.1).collect();
        for ((p, _), rank) in scored.iter().zip(competition_ranks(&values, higher_better)) {
            let slot = best.get_mut(p).expect("known participant").entry(metric.to_string()).or_insert(rank);
            *slot = (*slot).min(rank);
        }
    }

    let mut entries = Vec::new();
    let mut excluded = Vec::new();
    for (p, ranks) in best {
        let missing: Vec<String> = track
            .metrics()
            .iter()
            .filter(|(m, _)| !ranks.contains_key(*m))
            .map(|(m, _)| m.to_string())
            .collect();
        if !missing.is_empty() {
            excluded.push(Exclusion {
                participant: p.to_string(),
                missing_metrics: missing,
            });
            continue;
        }
        let average_rank = ranks.values().sum::<usize>() as f64 / ranks.len() as f64;
        entries.push(Entry {
            participant: p.to_string(),
            position: 0,
            average_rank,
            best_ranks: ranks,
        });
    }
    entries.sort_by(|a, b| a.average_rank.total_cmp(&b.average_rank).then_with(|| a.participant.cmp(&b.participant)));
    for i in 0..entries.len() {
        entries[i].position = if i > 0 && entries[i].average_rank == entries[i - 1].average_rank {
            entries[i - 1].position
        } else {
            i + 1
        };
    }
    SetupBoard {
        scope: scope.into(),
        track,
        language,
        arch,
        submissions: reports.len(),
        entries,
        excluded,
    }
}

/// Ranks per `(track, language, arch)` setup, plus a pooled view across
/// languages per `(track, arch)`. The result does not depend on report order.
pub fn build_leaderboard(reports: &[ScoreReport]) -> Leaderboard {
    let mut setups: BTreeMap<(Track, String, Option<ArchTag>), Vec<&ScoreReport>> = BTreeMap::new();
    let mut pooled: BTreeMap<(Track, Option<ArchTag>), Vec<&ScoreReport>> = BTreeMap::new();
    for r in reports {
        setups.entry((r.track, r.language.clone(), r.arch)).or_default().push(r);
        pooled.entry((r.track, r.arch)).or_default().push(r);
    }
    Leaderboard {
        tie_rule: TIE_RULE.into(),
        setups: setups
            .into_iter()
            .map(|((t, l, a), rs)| board(PER_SETUP, t, Some(l), a, &rs))
            .collect(),
        pooled: pooled.into_iter().map(|((t, a), rs)| board(POOLED, t, None, a, &rs)).collect(),
    }
}
