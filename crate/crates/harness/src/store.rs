//! Append-only submission store: one JSON file per scored submission under
//! `submissions/`, plus `index.json`, which is rebuilt from those files on
//! every open and rewritten after each append.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::score::ScoreReport;
use crate::submission::{valid_id, Submission};
use crate::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRecord {
    /// Arrival order, starting at 0.
    pub seq: u64,
    pub submission: Submission,
    pub report: ScoreReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IndexEntry {
    seq: u64,
    id: String,
    participant: String,
}

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    records: Vec<StoredRecord>,
}

impl Store {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let dir = root.join("submissions");
        fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
        let mut records = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| HarnessError::io(&dir, e))? {
            let path = entry.map_err(|e| HarnessError::io(&dir, e))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let rec: StoredRecord = serde_json::from_str(&crate::read_file(&path)?)
                .map_err(|e| HarnessError::Store(format!("{}: {e}", path.display())))?;
            records.push(rec);
        }
        records.sort_by_key(|r| r.seq);
        let store = Self { root, records };
        store.write_index()?;
        Ok(store)
    }

    pub fn records(&self) -> &[StoredRecord] {
        &self.records
    }

    pub fn get(&self, id: &str) -> Option<&StoredRecord> {
        self.records.iter().find(|r| r.submission.id == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.get(id).is_some()
    }

    pub fn reports(&self) -> Vec<ScoreReport> {
        self.records.iter().map(|r| r.report.clone()).collect()
    }

    fn record_path(&self, id: &str) -> PathBuf {
        self.root.join("submissions").join(format!("{id}.json"))
    }

    /// Persists a scored submission. Fails with [`HarnessError::Duplicate`]
    /// if the id is already stored.
    pub fn append(&mut self, submission: Submission, report: ScoreReport) -> Result<&StoredRecord> {
        if !valid_id(&submission.id) {
            return Err(HarnessError::Invalid(format!("bad submission id \"{}\"", submission.id)));
        }
        if self.contains(&submission.id) {
            return Err(HarnessError::Duplicate(submission.id));
        }
        let rec = StoredRecord {
            seq: self.records.last().map_or(0, |r| r.seq + 1),
            submission,
            report,
        };
        let path = self.record_path(&rec.submission.id);
        let tmp = path.with_extension("json.tmp");
        let body = serde_json::to_string_pretty(&rec)?;
        {
            let mut f = OpenOptions::new()
                .write(true)
                .create(true)
                .truncate(true)
                .open(&tmp)
                .map_err(|e| HarnessError::io(&tmp, e))?;
            f.write_all(body.as_bytes()).map_err(|e| HarnessError::io(&tmp, e))?;
            f.sync_all().map_err(|e| HarnessError::io(&tmp, e))?;
        }
        if path.exists() {
            let _ = fs::remove_file(&tmp);
            return Err(HarnessError::Duplicate(rec.submission.id));
        }
        fs::rename(&tmp, &path).map_err(|e| HarnessError::io(&path, e))?;
        self.records.push(rec);
        self.write_index()?;
        Ok(self.records.last().expect("just pushed"))
    }

    fn write_index(&self) -> Result<()> {
        let index: Vec<IndexEntry> = self
            .records
            .iter()
            .map(|r| IndexEntry {
                seq: r.seq,
                id: r.submission.id.clone(),
                participant: r.submission.participant.clone(),
            })
            .collect();
        let path = self.root.join("index.json");
        let tmp = self.root.join("index.json.tmp");
        fs::write(&tmp, serde_json::to_string_pretty(&index)?).map_err(|e| HarnessError::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| HarnessError::io(&path, e))
    }
}
