//! Headless scripted dialogues.
//!
//! A simulation script interleaves what the customer says with what the
//! backend will answer:
//!
//! ```text
//! # comment
//! backend: いらっしゃいませ。
//! customer: こんにちは。
//! backend: こんにちは。今日はどちらへ？[END]
//! backend: @unavailable
//! ```
//!
//! `backend:` lines feed a scripted backend in file order and use the
//! backend script escapes (`\n`, `\\`, `\@`, `@timeout`, `@unavailable`,
//! `@malformed`). `customer:` lines are spoken in order after the greeting.

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::gateway::{parse_script_line, BackendHandle, ScriptEntry, ScriptError, ScriptedBackend};
use crate::segment::SpeechSegment;
use crate::session::{Scenario, Session, SessionError, SessionState, SessionStatus, TurnResult};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulationScript {
    pub customer: Vec<String>,
    pub backend: Vec<ScriptEntry>,
}

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: expected `customer:` or `backend:`")]
    UnknownLine { line: usize },
    #[error(transparent)]
    Script(#[from] ScriptError),
    #[error("turn {turn}: {source}")]
    Session { turn: usize, source: SessionError },
}

impl SimulationScript {
    pub fn parse(text: &str) -> Result<Self, SimulationError> {
        let mut script = Self { customer: Vec::new(), backend: Vec::new() };
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim_start();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix("customer:") {
                script.customer.push(rest.trim().to_owned());
            } else if let Some(rest) = trimmed.strip_prefix("backend:") {
                script.backend.push(parse_script_line(rest.trim(), i + 1)?);
            } else {
                return Err(SimulationError::UnknownLine { line: i + 1 });
            }
        }
        Ok(script)
    }

    pub fn load(path: &Path) -> Result<Self, SimulationError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| SimulationError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn backend(&self) -> BackendHandle {
        BackendHandle::scripted(ScriptedBackend::new(self.backend.clone()))
    }
}

#[derive(Debug, Clone)]
pub struct SimulationReport {
    pub state: SessionState,
    /// Greeting first, then one result per customer line spoken.
    pub turns: Vec<TurnResult>,
    pub elapsed: Duration,
}

/// Runs the script until the customer lines run out or the session ends.
pub fn run_simulation(
    scenario: Arc<Scenario>,
    script: &SimulationScript,
    backend: BackendHandle,
    emit: &mut dyn FnMut(&SpeechSegment),
) -> Result<SimulationReport, SimulationError> {
    let started = Instant::now();
    let (mut session, greeting) =
        Session::start(scenario, backend, "simulation", emit).map_err(|source| SimulationError::Session { turn: 0, source })?;
    let mut turns = vec![greeting];
    for (i, utterance) in script.customer.iter().enumerate() {
        if session.state().status != SessionStatus::Active {
            tracing::warn!(remaining = script.customer.len() - i, "session ended before the script did");
            break;
        }
        let result = session.advance(utterance, emit).map_err(|source| SimulationError::Session { turn: i + 1, source })?;
        turns.push(result);
    }
    Ok(SimulationReport { state: session.state().clone(), turns, elapsed: started.elapsed() })
}
