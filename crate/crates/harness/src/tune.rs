//! Hyperparameter search over an external command.
//!
//! The command template may contain `{name}` placeholders for each search
//! parameter; it runs through `sh -c` and must print the objective on its last
//! output line. The trial log is rewritten after every trial, so an
//! interrupted search resumes where it stopped.

use std::path::Path;
use std::process::Command;

use serde_json::{Map, Value};

use glossbench_hyperopt::{best_trial, record, suggest_with, SearchSpace, TrialLog, TrialRecord};

/// Substitutes `{name}` placeholders with the configuration's values.
pub fn render(template: &str, config: &Map<String, Value>) -> String {
    let mut out = template.to_string();
    for (k, v) in config {
        let text = match v {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        out = out.replace(&format!("{{{k}}}"), &text);
    }
    out
}

/// Runs a rendered command; the objective is the last non-empty stdout line.
/// Any failure yields NaN, which the optimizer records as a failed trial.
pub fn run_trial(command: &str) -> f64 {
    let Ok(out) = Command::new("sh").arg("-c").arg(command).output() else {
        return f64::NAN;
    };
    if !out.status.success() {
        return f64::NAN;
    }
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .rev()
        .find(|l| !l.trim().is_empty())
        .and_then(|l| l.trim().parse().ok())
        .unwrap_or(f64::NAN)
}

/// Runs trials until the log holds `budget` of them, calling `objective`
/// for each new configuration.
pub fn tune_with<F>(
    space: &SearchSpace,
    budget: usize,
    init: usize,
    seed: u64,
    log_path: &Path,
    mut objective: F,
) -> anyhow::Result<TrialLog>
where
    F: FnMut(&Map<String, Value>) -> f64,
{
    let mut log = if log_path.exists() {
        let log = TrialLog::load(log_path)?;
        anyhow::ensure!(
            log.space == *space && log.seed == seed && log.init_count == init,
            "existing log {} was written for a different search; remove it or change --log",
            log_path.display()
        );
        log
    } else {
        TrialLog {
            space: space.clone(),
            seed,
            init_count: init,
            trials: Vec::new(),
        }
    };
    anyhow::ensure!(init >= 1 && budget >= init, "need budget >= init >= 1");
    while log.trials.len() < budget {
        let s = suggest_with(&log.trials, space, seed, init)?;
        let v = objective(&s.config);
        record(&mut log.trials, s, v);
        log.save(log_path)?;
    }
    Ok(log)
}

pub fn best(log: &TrialLog) -> Option<&TrialRecord> {
    best_trial(&log.trials)
}
