//! Live sessions, serialised per id, with every accepted mutation logged.
//!
//! Lock order is: session table, then a session, then the log.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use oraldx_core::engine::Engine;
use oraldx_core::reasoning::{Context, ReasoningError, SessionState};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{now_ms, read_log, replay, Event, EventKind, LogError, LogWriter, ReplayError};
use crate::SCHEMA_VERSION;

pub const LOG_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Clone)]
pub struct StoreConfig {
    /// Where the event log and snapshot live; `None` keeps nothing on disk.
    pub data_dir: Option<PathBuf>,
    pub idle_timeout: Duration,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig {
            data_dir: None,
            idle_timeout: Duration::from_secs(3600),
        }
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("no session `{0}`")]
    NotFound(String),
    #[error(transparent)]
    Reasoning(#[from] ReasoningError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("snapshot {path}: {message}")]
    Snapshot { path: String, message: String },
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Snapshot {
    pub schema_version: u32,
    /// Every event up to and including this one is folded in.
    pub last_seq: u64,
    pub sessions: Vec<SessionState>,
}

struct Slot {
    state: SessionState,
    touched: Instant,
    /// Cleared when the session expires while a caller waits on it.
    live: bool,
}

struct Log {
    next_seq: u64,
    writer: Option<LogWriter>,
}

pub struct SessionStore {
    engine: Arc<Engine>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Slot>>>>,
    log: Mutex<Log>,
    config: StoreConfig,
}

fn snapshot_err(path: &Path, e: impl std::fmt::Display) -> StoreError {
    StoreError::Snapshot {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

impl SessionStore {
    /// Restores the snapshot and replays the log written after it.
    pub fn open(engine: Arc<Engine>, config: StoreConfig) -> Result<Self, StoreError> {
        let mut base = BTreeMap::new();
        let mut last_seq = 0;
        let mut writer = None;
        if let Some(dir) = &config.data_dir {
            fs::create_dir_all(dir).map_err(|e| snapshot_err(dir, e))?;
            let snap_path = dir.join(SNAPSHOT_FILE);
            if snap_path.exists() {
                let text = fs::read_to_string(&snap_path).map_err(|e| snapshot_err(&snap_path, e))?;
                let snap: Snapshot = serde_json::from_str(&text).map_err(|e| snapshot_err(&snap_path, e))?;
                if snap.schema_version != SCHEMA_VERSION {
                    return Err(snapshot_err(
                        &snap_path,
                        format!("unsupported schema_version {}", snap.schema_version),
                    ));
                }
                last_seq = snap.last_seq;
                base = snap
                    .sessions
                    .into_iter()
                    .map(|s| (s.session_id.clone(), s))
                    .collect();
            }
            let log_path = dir.join(LOG_FILE);
            let events = read_log(&log_path)?;
            let pending: Vec<Event> = events.into_iter().filter(|e| e.seq > last_seq).collect();
            if let Some(last) = pending.last() {
                last_seq = last.seq;
            }
            base = replay(&engine.context(), base, &pending)?;
            writer = Some(LogWriter::open(log_path)?);
        }
        let now = Instant::now();
        let sessions = base
            .into_iter()
            .map(|(id, state)| {
                let slot = Slot {
                    state,
                    touched: now,
                    live: true,
                };
                (id, Arc::new(Mutex::new(slot)))
            })
            .collect();
        Ok(SessionStore {
            engine,
            sessions: RwLock::new(sessions),
            log: Mutex::new(Log {
                next_seq: last_seq + 1,
                writer,
            }),
            config,
        })
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn context(&self) -> Context<'_> {
        self.engine.context()
    }

    pub fn log_path(&self) -> Option<PathBuf> {
        self.config.data_dir.as_ref().map(|d| d.join(LOG_FILE))
    }

    fn record(&self, session_id: &str, kind: EventKind) -> Result<(), StoreError> {
        let mut log = self.log.lock().expect("log lock");
        let event = Event {
            seq: log.next_seq,
            at_ms: now_ms(),
            session_id: session_id.to_string(),
            kind,
        };
        if let Some(w) = log.writer.as_mut() {
            w.append(&event)?;
        }
        log.next_seq += 1;
        Ok(())
    }

    pub fn create(&self, case_text: &str, image_features: &[f64]) -> Result<SessionState, StoreError> {
        let id = uuid::Uuid::new_v4().to_string();
        let state = SessionState::start_with_id(&self.context(), id.clone(), case_text, image_features)?;
        let mut table = self.sessions.write().expect("table lock");
        self.record(
            &id,
            EventKind::Created {
                case_text: case_text.to_string(),
                image_features: image_features.to_vec(),
            },
        )?;
        let slot = Slot {
            state: state.clone(),
            touched: Instant::now(),
            live: true,
        };
        table.insert(id, Arc::new(Mutex::new(slot)));
        Ok(state)
    }

    fn slot(&self, id: &str) -> Result<Arc<Mutex<Slot>>, StoreError> {
        self.sessions
            .read()
            .expect("table lock")
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(id.to_string()))
    }

    /// Runs `f` on a copy of the session and commits it only once the
    /// event it returns is logged.
    pub fn mutate<T>(
        &self,
        id: &str,
        f: impl FnOnce(&Context<'_>, &mut SessionState) -> Result<(T, EventKind), ReasoningError>,
    ) -> Result<(T, SessionState), StoreError> {
        let slot = self.slot(id)?;
        let mut slot = slot.lock().expect("session lock");
        if !slot.live {
            return Err(StoreError::NotFound(id.to_string()));
        }
        let mut next = slot.state.clone();
        let (value, kind) = f(&self.context(), &mut next)?;
        self.record(id, kind)?;
        slot.state = next;
        slot.touched = Instant::now();
        Ok((value, slot.state.clone()))
    }

    pub fn get(&self, id: &str) -> Result<SessionState, StoreError> {
        let slot = self.slot(id)?;
        let slot = slot.lock().expect("session lock");
        if !slot.live {
            return Err(StoreError::NotFound(id.to_string()));
        }
        Ok(slot.state.clone())
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("table lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .sessions
            .read()
            .expect("table lock")
            .keys()
            .cloned()
            .collect();
        ids.sort();
        ids
    }

    /// Drops sessions idle for longer than the timeout as of `now`.
    pub fn expire_idle_at(&self, now: Instant) -> Result<usize, StoreError> {
        let mut table = self.sessions.write().expect("table lock");
        let mut expired = Vec::new();
        for (id, slot) in table.iter() {
            let mut slot = slot.lock().expect("session lock");
            if now.saturating_duration_since(slot.touched) > self.config.idle_timeout {
                self.record(id, EventKind::Expired)?;
                slot.live = false;
                expired.push(id.clone());
            }
        }
        for id in &expired {
            table.remove(id);
        }
        Ok(expired.len())
    }

    pub fn expire_idle(&self) -> Result<usize, StoreError> {
        self.expire_idle_at(Instant::now())
    }

    /// Writes every live session plus the last logged seq.
    pub fn snapshot(&self) -> Result<Option<PathBuf>, StoreError> {
        let Some(dir) = &self.config.data_dir else {
            return Ok(None);
        };
        let table = self.sessions.write().expect("table lock");
        let mut sessions: Vec<SessionState> = table
            .values()
            .map(|s| s.lock().expect("session lock").state.clone())
            .collect();
        sessions.sort_by(|a, b| a.session_id.cmp(&b.session_id));
        let last_seq = self.log.lock().expect("log lock").next_seq - 1;
        let snap = Snapshot {
            schema_version: SCHEMA_VERSION,
            last_seq,
            sessions,
        };
        let path = dir.join(SNAPSHOT_FILE);
        let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let text = serde_json::to_string(&snap).expect("snapshot serialises");
        fs::write(&tmp, text).map_err(|e| snapshot_err(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| snapshot_err(&path, e))?;
        drop(table);
        Ok(Some(path))
    }
}
