//! Append-only session store.
//!
//! Each write appends the full updated record as one JSON line; on open the
//! last line per (session, environment) wins and the file is rewritten with
//! one line per record. Writers are serialized by the file lock; readers only
//! take the map's read lock.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchEvent {
    /// Label number of the option shown.
    pub option: u32,
    /// Frame at which the participant switched; `None` if they followed to the end.
    pub step: Option<usize>,
    /// Discomfort replayed up to `step`.
    pub g: Option<f64>,
    pub eta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub participant: String,
    pub env_id: String,
    /// Per-option percentages in label order.
    pub percentages: Option<Vec<f64>>,
    /// At most one event per shown option.
    pub switches: Vec<SwitchEvent>,
}

impl SessionRecord {
    pub fn new(session_id: &str, participant: &str, env_id: &str) -> Self {
        Self {
            session_id: session_id.to_string(),
            participant: participant.to_string(),
            env_id: env_id.to_string(),
            percentages: None,
            switches: Vec::new(),
        }
    }

    /// Replaces any earlier event for the same option.
    pub fn record_switch(&mut self, event: SwitchEvent) {
        self.switches.retain(|e| e.option != event.option);
        self.switches.push(event);
        self.switches.sort_by_key(|e| e.option);
    }
}

type Key = (String, String);

#[derive(Debug, thiserror::Error)]
#[error("{}: {source}", path.display())]
pub struct StoreError {
    pub path: PathBuf,
    #[source]
    pub source: io::Error,
}

pub struct Store {
    path: Option<PathBuf>,
    log: Mutex<Option<File>>,
    records: RwLock<BTreeMap<Key, SessionRecord>>,
}

impl Store {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            log: Mutex::new(None),
            records: RwLock::new(BTreeMap::new()),
        }
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let err = |source| StoreError { path: path.clone(), source };
        let mut records = BTreeMap::new();
        match File::open(&path) {
            Ok(f) => {
                for (i, line) in BufReader::new(f).lines().enumerate() {
                    let line = line.map_err(err)?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let rec: SessionRecord = serde_json::from_str(&line).map_err(|e| {
                        err(io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)))
                    })?;
                    records.insert((rec.session_id.clone(), rec.env_id.clone()), rec);
                }
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(err(e)),
        }

        let tmp = path.with_extension("compacting");
        {
            let mut out = File::create(&tmp).map_err(err)?;
            for rec in records.values() {
                writeln!(out, "{}", serde_json::to_string(rec).expect("record serializes")).map_err(err)?;
            }
            out.sync_all().map_err(err)?;
        }
        fs::rename(&tmp, &path).map_err(err)?;
        let log = OpenOptions::new().append(true).open(&path).map_err(err)?;
        Ok(Self {
            path: Some(path),
            log: Mutex::new(Some(log)),
            records: RwLock::new(records),
        })
    }

    /// Applies `edit` to the record for (session, env), creating it with
    /// `participant` if absent, and persists the result.
    pub fn update(
        &self,
        session: &str,
        participant: Option<&str>,
        env: &str,
        edit: impl FnOnce(&mut SessionRecord),
    ) -> Result<SessionRecord, StoreError> {
        let mut log = self.log.lock().expect("store log lock");
        let key = (session.to_string(), env.to_string());
        let mut rec = self
            .records
            .read()
            .expect("store map lock")
            .get(&key)
            .cloned()
            .unwrap_or_else(|| SessionRecord::new(session, participant.unwrap_or(session), env));
        if let Some(p) = participant {
            rec.participant = p.to_string();
        }
        edit(&mut rec);
        if let (Some(file), Some(path)) = (log.as_mut(), &self.path) {
            let line = serde_json::to_string(&rec).expect("record serializes");
            writeln!(file, "{line}")
                .and_then(|_| file.flush())
                .map_err(|source| StoreError { path: path.clone(), source })?;
        }
        self.records.write().expect("store map lock").insert(key, rec.clone());
        Ok(rec)
    }

    pub fn records(&self) -> Vec<SessionRecord> {
        self.records.read().expect("store map lock").values().cloned().collect()
    }
}
