//! Append-only session event log and its replay.
//!
//! The log is JSON Lines, one [`Event`] per line, in increasing `seq`.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use oraldx_core::reasoning::{Context, Finding, ReasoningError, SessionState, StepOutcome};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    Created {
        case_text: String,
        image_features: Vec<f64>,
    },
    /// `outcome` is what the step produced; replay checks it.
    Stepped {
        outcome: StepOutcome,
    },
    Clarified {
        answer: String,
    },
    Waived,
    Finalized {
        top_k: usize,
        finding: Finding,
    },
    Expired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    /// Milliseconds since the Unix epoch.
    pub at_ms: u64,
    pub session_id: String,
    #[serde(flatten)]
    pub kind: EventKind,
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("event log line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("event log line {line}: seq {seq} does not follow {previous}")]
    Sequence { line: usize, seq: u64, previous: u64 },
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("event {seq}: session `{session}` created twice")]
    Duplicate { seq: u64, session: String },
    #[error("event {seq}: unknown session `{session}`")]
    UnknownSession { seq: u64, session: String },
    #[error("event {seq}: {source}")]
    Rejected {
        seq: u64,
        #[source]
        source: ReasoningError,
    },
    #[error("event {seq}: recomputed result differs from the log (different model?)")]
    Diverged { seq: u64 },
}

/// Parses a whole log. Blank lines are skipped; `seq` must increase.
pub fn parse_log(text: &str) -> Result<Vec<Event>, LogError> {
    let mut out: Vec<Event> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let event: Event = serde_json::from_str(line).map_err(|e| LogError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if let Some(prev) = out.last() {
            if event.seq <= prev.seq {
                return Err(LogError::Sequence {
                    line: i + 1,
                    seq: event.seq,
                    previous: prev.seq,
                });
            }
        }
        out.push(event);
    }
    Ok(out)
}

pub fn read_log(path: &Path) -> Result<Vec<Event>, LogError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path, e)),
    };
    let mut text = String::new();
    for line in BufReader::new(file).lines() {
        text.push_str(&line.map_err(|e| io_err(path, e))?);
        text.push('\n');
    }
    parse_log(&text)
}

fn io_err(path: &Path, source: std::io::Error) -> LogError {
    LogError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Applies one event to the live session table.
pub fn apply(
    ctx: &Context<'_>,
    sessions: &mut BTreeMap<String, SessionState>,
    event: &Event,
) -> Result<(), ReplayError> {
    let seq = event.seq;
    let id = &event.session_id;
    if let EventKind::Created {
        case_text,
        image_features,
    } = &event.kind
    {
        if sessions.contains_key(id) {
            return Err(ReplayError::Duplicate {
                seq,
                session: id.clone(),
            });
        }
        let state = SessionState::start_with_id(ctx, id.clone(), case_text, image_features)
            .map_err(|source| ReplayError::Rejected { seq, source })?;
        sessions.insert(id.clone(), state);
        return Ok(());
    }
    let Some(state) = sessions.get_mut(id) else {
        return Err(ReplayError::UnknownSession {
            seq,
            session: id.clone(),
        });
    };
    let rejected = |source| ReplayError::Rejected { seq, source };
    match &event.kind {
        EventKind::Created { .. } => unreachable!("handled above"),
        EventKind::Stepped { outcome } => {
            if state.step(ctx).map_err(rejected)? != *outcome {
                return Err(ReplayError::Diverged { seq });
            }
        }
        EventKind::Clarified { answer } => state.answer(ctx, answer).map_err(rejected)?,
        EventKind::Waived => state.waive(ctx).map_err(rejected)?,
        EventKind::Finalized { top_k, finding } => {
            if state.finalize(ctx, *top_k).map_err(rejected)? != *finding {
                return Err(ReplayError::Diverged { seq });
            }
        }
        EventKind::Expired => {
            sessions.remove(id);
        }
    }
    Ok(())
}

/// Rebuilds every live session from `base` plus `events`.
pub fn replay(
    ctx: &Context<'_>,
    base: BTreeMap<String, SessionState>,
    events: &[Event],
) -> Result<BTreeMap<String, SessionState>, ReplayError> {
    let mut sessions = base;
    for e in events {
        apply(ctx, &mut sessions, e)?;
    }
    Ok(sessions)
}

/// Appends events to a log file, flushing each line.
#[derive(Debug)]
pub struct LogWriter {
    path: PathBuf,
    file: File,
}

impl LogWriter {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, LogError> {
        let path = path.into();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| io_err(&path, e))?;
        Ok(LogWriter { path, file })
    }

    pub fn append(&mut self, event: &Event) -> Result<(), LogError> {
        let mut line = serde_json::to_string(event).expect("events serialise");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| io_err(&self.path, e))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
