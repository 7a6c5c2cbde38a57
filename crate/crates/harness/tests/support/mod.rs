//! Fixtures shared by the harness tests and the acceptance suite.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

use glossbench_core::dataset::gen_synthetic;
use glossbench_core::{ArchTag, Dataset};
use glossbench_harness::service::{router, AppState};
use glossbench_harness::{MetricsConfig, ScoreReport, Scorer, Store, Submission, Track};

pub const WORDS: [&str; 12] = [
    "alpha", "beta", "gamma", "delta", "river", "stone", "light", "quick", "bright", "under", "over", "small",
];

pub fn reference(n: usize) -> Dataset {
    gen_synthetic(21, n, 8, &WORDS).unwrap()
}

pub fn revdict_submission(id: &str, participant: &str, reference: &Dataset, noise: f64) -> Submission {
    let mut items = BTreeMap::new();
    for (k, d) in reference.items.iter().enumerate() {
        let v: Vec<f64> = d
            .embedding(ArchTag::Sgns)
            .unwrap()
            .iter()
            .enumerate()
            .map(|(j, x)| x + noise * (((k * 31 + j * 17) % 13) as f64 - 6.0) / 6.0)
            .collect();
        items.insert(d.id.clone(), Value::from(v));
    }
    Submission {
        id: id.into(),
        participant: participant.into(),
        track: Track::Revdict,
        language: reference.language.clone(),
        arch: Some(ArchTag::Sgns),
        timestamp: "2026-01-01T00:00:00Z".into(),
        items,
    }
}

/// Each gloss with its first `drop` tokens removed (or kept whole if too short).
pub fn defmod_submission(id: &str, participant: &str, reference: &Dataset, drop: usize) -> Submission {
    let items = reference
        .items
        .iter()
        .map(|d| {
            let toks: Vec<&str> = d.gloss.split_whitespace().collect();
            let keep = if toks.len() > drop { &toks[drop..] } else { &toks[..] };
            (d.id.clone(), Value::from(keep.join(" ")))
        })
        .collect();
    Submission {
        id: id.into(),
        participant: participant.into(),
        track: Track::Defmod,
        language: reference.language.clone(),
        arch: None,
        timestamp: "2026-01-01T00:00:00Z".into(),
        items,
    }
}

/// A bare revdict report with the given metric values.
pub fn report(id: &str, participant: &str, language: &str, mse: f64, cosine: f64, rank: f64) -> ScoreReport {
    ScoreReport {
        submission_id: id.into(),
        participant: participant.into(),
        track: Track::Revdict,
        language: language.into(),
        arch: Some(ArchTag::Sgns),
        metrics: BTreeMap::from([("mse".into(), mse), ("cosine".into(), cosine), ("rank".into(), rank)]),
        per_item: None,
        flags: Default::default(),
    }
}

/// A beats B beats C on all three metrics.
pub fn dominance_reports() -> Vec<ScoreReport> {
    vec![
        report("a1", "A", "en", 0.1, 0.9, 0.1),
        report("b1", "B", "en", 0.2, 0.8, 0.2),
    ]
}

/// After best-selection A ranks (1,2,3), B (2,3,1), C (3,1,2) on
/// (mse, cosine, rank), so every average is 2.
pub fn cyclic_reports() -> Vec<ScoreReport> {
    vec![
        report("a1", "A", "en", 0.1, 0.8, 0.3),
        report("b1", "B", "en", 0.2, 0.7, 0.1),
        report("c1", "C", "en", 0.3, 0.9, 0.2),
        // weaker extra submissions never improve a best rank
        report("c2", "C", "en", 0.9, 0.1, 0.9),
        report("a2", "A", "en", 0.8, 0.2, 0.8),
    ]
}

pub struct Response {
    pub status: StatusCode,
    pub body: String,
}

pub async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<String>) -> Response {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    Response {
        status,
        body: String::from_utf8(bytes.to_vec()).unwrap(),
    }
}

pub fn app(reference: &Dataset, metrics: MetricsConfig, store_dir: &std::path::Path) -> axum::Router {
    let state = AppState::new(reference.clone(), Scorer::new(metrics).unwrap(), Store::open(store_dir).unwrap());
    router(Arc::new(state))
}

pub fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap()
}
