//! Line-delimited session transcripts and deterministic replay.
//!
//! One JSON object per line:
//!
//! ```text
//! {"index":0,"phase":1,"speaker":"system","text":"…","timestamp":"…","backend":[{"completed":"…"}],"after":{…}}
//! ```
//!
//! `index`, `phase`, `speaker`, `text` and `timestamp` are always present.
//! System records also carry `backend`, the outcome of every backend attempt
//! made during that turn, and `after`, the phase, status and display once the
//! turn finished. Replay feeds the recorded outcomes to a scripted backend
//! and the recorded customer texts to a fresh session.

use std::io::{self, BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::display::DisplayState;
use crate::gateway::{BackendHandle, CallOutcome, ScriptEntry, ScriptedBackend};
use crate::phase::PhaseId;
use crate::session::{Scenario, Session, SessionError, SessionState, SessionStatus, TurnResult};
use crate::turn::{DialogueTurn, Speaker};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub phase: PhaseId,
    pub status: SessionStatus,
    pub display: DisplayState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub index: u64,
    pub phase: PhaseId,
    pub speaker: Speaker,
    pub text: String,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<Vec<CallOutcome>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after: Option<StateSnapshot>,
}

impl TranscriptRecord {
    fn from_turn(turn: &DialogueTurn, timestamp: DateTime<Utc>) -> Self {
        Self {
            index: turn.index,
            phase: turn.phase,
            speaker: turn.speaker,
            text: turn.text.clone(),
            timestamp,
            backend: None,
            after: None,
        }
    }
}

/// The records a finished turn contributes: the customer line, if any, then
/// the system line.
pub fn records_for(result: &TurnResult, timestamp: DateTime<Utc>) -> Vec<TranscriptRecord> {
    let mut records = Vec::with_capacity(2);
    if let Some(customer) = &result.customer_turn {
        records.push(TranscriptRecord::from_turn(customer, timestamp));
    }
    let mut system = TranscriptRecord::from_turn(&result.system_turn, timestamp);
    system.backend = Some(result.backend_calls.clone());
    system.after = Some(StateSnapshot { phase: result.phase_after, status: result.status, display: result.display.clone() });
    records.push(system);
    records
}

/// Appends turns to a line-delimited transcript, flushing after each turn.
pub struct TranscriptWriter<W: Write> {
    out: W,
}

impl<W: Write> TranscriptWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn write_turn(&mut self, result: &TurnResult) -> io::Result<()> {
        for record in records_for(result, Utc::now()) {
            serde_json::to_writer(&mut self.out, &record)?;
            self.out.write_all(b"\n")?;
        }
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("reading transcript: {0}")]
    Io(#[from] io::Error),
    #[error("transcript is empty")]
    Empty,
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

pub fn parse_transcript(reader: impl BufRead) -> Result<Vec<TranscriptRecord>, TranscriptError> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| TranscriptError::Parse { line: i + 1, reason: e.to_string() })?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(TranscriptError::Empty);
    }
    Ok(records)
}

pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptRecord>, TranscriptError> {
    let file = std::fs::File::open(path)?;
    parse_transcript(io::BufReader::new(file))
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error("transcript structure: {0}")]
    Structure(String),
    #[error("replaying turn {index}: {source}")]
    Session { index: u64, source: SessionError },
}

#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub state: SessionState,
    pub display: DisplayState,
    /// The last snapshot in the transcript.
    pub logged: Option<StateSnapshot>,
}

impl ReplayOutcome {
    /// Whether the replayed phase, status and display equal the logged ones.
    pub fn matches_log(&self) -> bool {
        self.logged.as_ref().is_some_and(|logged| {
            logged.phase == self.state.current_phase && logged.status == self.state.status && logged.display == self.display
        })
    }
}

/// Re-runs a transcript against a scripted backend built from its recorded
/// backend outcomes. `max_retries` must match the run that produced it.
pub fn replay(scenario: Arc<Scenario>, records: &[TranscriptRecord], max_retries: u32) -> Result<ReplayOutcome, ReplayError> {
    let Some(first) = records.first() else {
        return Err(TranscriptError::Empty.into());
    };
    if first.speaker != Speaker::System {
        return Err(ReplayError::Structure("first record must be the system greeting".into()));
    }
    let mut entries = Vec::new();
    for record in records.iter().filter(|r| r.speaker == Speaker::System) {
        let tape = record
            .backend
            .as_ref()
            .ok_or_else(|| ReplayError::Structure(format!("system record {} has no backend outcomes", record.index)))?;
        entries.extend(tape.iter().map(ScriptEntry::from));
    }
    let backend = BackendHandle::scripted(ScriptedBackend::new(entries)).with_max_retries(max_retries);
    let (mut session, _) = Session::start(scenario, backend, "replay", &mut |_| {})
        .map_err(|source| ReplayError::Session { index: first.index, source })?;
    for record in records.iter().filter(|r| r.speaker == Speaker::Customer) {
        if session.state().status != SessionStatus::Active {
            return Err(ReplayError::Structure(format!("customer record {} after the session ended", record.index)));
        }
        session.advance(&record.text, &mut |_| {}).map_err(|source| ReplayError::Session { index: record.index, source })?;
    }
    let logged = records.iter().rev().find_map(|r| r.after.clone());
    let state = session.state().clone();
    Ok(ReplayOutcome { display: state.display.clone(), state, logged })
}
