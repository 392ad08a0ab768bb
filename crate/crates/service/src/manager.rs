//! Live sessions, their command queues and message streams.
//!
//! Each session has one worker task that takes utterances off a queue and
//! runs them one at a time on the blocking pool, so turns of one session
//! never interleave. Messages get their sequence number and are broadcast
//! under one lock, which also guards the snapshot served to new viewers.

use std::collections::HashMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use thiserror::Error;
use tokio::sync::{broadcast, mpsc};
use tourguide_core::gateway::BackendHandle;
use tourguide_core::segment::SpeechSegment;
use tourguide_core::session::{Scenario, Session, SessionError, SessionState, SessionStatus, TurnResult};
use tourguide_core::transcript::TranscriptWriter;
use tourguide_core::turn::{DialogueTurn, Speaker};

use crate::wire::{ErrorCode, Snapshot, WireBody, WireMessage};

const EVENT_BUFFER: usize = 1024;

pub type BackendFactory = Arc<dyn Fn() -> Result<BackendHandle, String> + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ServiceError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("session is not active")]
    SessionNotActive,
    #[error("utterance rejected: {0}")]
    UtteranceRejected(String),
    #[error("capacity exceeded: {0} sessions active")]
    CapacityExceeded(usize),
    #[error("backend failure: {0}")]
    BackendFailure(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ServiceError {
    pub fn code(&self) -> ErrorCode {
        match self {
            ServiceError::UnknownSession(_) => ErrorCode::UnknownSession,
            ServiceError::SessionNotActive => ErrorCode::SessionNotActive,
            ServiceError::UtteranceRejected(_) => ErrorCode::UtteranceRejected,
            ServiceError::CapacityExceeded(_) => ErrorCode::CapacityExceeded,
            ServiceError::BackendFailure(_) => ErrorCode::BackendFailure,
            ServiceError::Internal(_) => ErrorCode::Internal,
        }
    }
}

impl From<&SessionError> for ServiceError {
    fn from(value: &SessionError) -> Self {
        match value {
            SessionError::NotActive(_) => ServiceError::SessionNotActive,
            SessionError::EmptyUtterance => ServiceError::UtteranceRejected("empty".into()),
            SessionError::Backend(e) => ServiceError::BackendFailure(e.to_string()),
            other => ServiceError::Internal(other.to_string()),
        }
    }
}

struct Published {
    seq: u64,
    state: SessionState,
    pending_customer: Option<DialogueTurn>,
    in_flight: Vec<SpeechSegment>,
    log: Vec<WireMessage>,
}

/// The message stream of one session.
pub struct Channel {
    session_id: String,
    inner: Mutex<Published>,
    events: broadcast::Sender<WireMessage>,
}

impl Channel {
    fn new(session_id: String, state: SessionState) -> Self {
        let (events, _) = broadcast::channel(EVENT_BUFFER);
        let inner = Published { seq: 0, state, pending_customer: None, in_flight: Vec::new(), log: Vec::new() };
        Self { session_id, inner: Mutex::new(inner), events }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Published> {
        self.inner.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    fn push(&self, inner: &mut Published, body: WireBody) -> WireMessage {
        inner.seq += 1;
        let message = WireMessage { session_id: self.session_id.clone(), seq: inner.seq, body };
        inner.log.push(message.clone());
        // No receivers is fine: nobody is watching yet.
        let _ = self.events.send(message.clone());
        message
    }

    pub fn publish(&self, body: WireBody) -> WireMessage {
        let mut inner = self.lock();
        self.push(&mut inner, body)
    }

    fn publish_customer(&self, turn: DialogueTurn) {
        let mut inner = self.lock();
        let body = WireBody::CustomerUtterance { index: turn.index, text: turn.text.clone() };
        inner.pending_customer = Some(turn);
        self.push(&mut inner, body);
    }

    fn publish_segment(&self, turn_index: u64, segment: &SpeechSegment) {
        let mut inner = self.lock();
        inner.in_flight.push(segment.clone());
        self.push(&mut inner, WireBody::SpeechSegment { turn_index, segment: segment.clone() });
    }

    /// Commits the state and publishes the closing messages of a turn.
    fn finish_turn(&self, state: Option<SessionState>, bodies: Vec<WireBody>) -> Vec<WireMessage> {
        let mut inner = self.lock();
        if let Some(state) = state {
            inner.state = state;
        }
        inner.pending_customer = None;
        inner.in_flight.clear();
        bodies.into_iter().map(|b| self.push(&mut inner, b)).collect()
    }

    /// A snapshot message plus a receiver for everything after it.
    pub fn subscribe(&self) -> (WireMessage, broadcast::Receiver<WireMessage>) {
        let inner = self.lock();
        let mut history = inner.state.history.clone();
        history.extend(inner.pending_customer.clone());
        let snapshot = Snapshot {
            phase: inner.state.current_phase,
            status: inner.state.status,
            turns_in_phase: inner.state.turns_in_phase,
            history,
            display: inner.state.display.clone(),
            in_flight: inner.in_flight.clone(),
        };
        let message = WireMessage { session_id: self.session_id.clone(), seq: inner.seq, body: WireBody::Snapshot(snapshot) };
        (message, self.events.subscribe())
    }

    pub fn state(&self) -> SessionState {
        self.lock().state.clone()
    }

    /// Every message published so far.
    pub fn log(&self) -> Vec<WireMessage> {
        self.lock().log.clone()
    }
}

/// Messages closing out a turn, in order: display, cues, phase change,
/// session end.
fn turn_end_bodies(result: &TurnResult, state: &SessionState) -> Vec<WireBody> {
    let mut bodies = vec![WireBody::DisplayState { display: result.display.clone() }];
    bodies.extend(result.cues.iter().map(|&cue| WireBody::ActionCue { cue }));
    if result.phase_after != result.phase_before {
        bodies.push(WireBody::PhaseChanged { from: result.phase_before, to: result.phase_after, decision: result.decision });
    }
    if result.status != SessionStatus::Active {
        bodies.push(WireBody::SessionClosed {
            status: result.status,
            plan: state.final_plan.clone(),
            failure: result.failure.clone(),
        });
    }
    bodies
}

struct Entry {
    channel: Arc<Channel>,
    queue: mpsc::UnboundedSender<String>,
}

#[derive(Default)]
struct Registry {
    sessions: HashMap<String, Entry>,
    /// Active sessions plus ones being created.
    live: usize,
}

pub struct SessionManager {
    scenario: Arc<Scenario>,
    backends: BackendFactory,
    max_sessions: usize,
    log_dir: Option<PathBuf>,
    registry: Arc<Mutex<Registry>>,
}

fn release(registry: &Mutex<Registry>) {
    let mut registry = registry.lock().unwrap_or_else(|p| p.into_inner());
    registry.live = registry.live.saturating_sub(1);
}

impl SessionManager {
    pub fn new(scenario: Arc<Scenario>, backends: BackendFactory, max_sessions: usize, log_dir: Option<PathBuf>) -> Self {
        Self { scenario, backends, max_sessions, log_dir, registry: Arc::default() }
    }

    fn registry(&self) -> std::sync::MutexGuard<'_, Registry> {
        self.registry.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn active_sessions(&self) -> usize {
        self.registry().live
    }

    pub fn channel(&self, session_id: &str) -> Result<Arc<Channel>, ServiceError> {
        self.registry()
            .sessions
            .get(session_id)
            .map(|e| e.channel.clone())
            .ok_or_else(|| ServiceError::UnknownSession(session_id.to_owned()))
    }

    /// Starts a session and speaks the greeting. Returns the id and the
    /// greeting messages.
    pub async fn create_session(&self) -> Result<(String, Vec<WireMessage>), ServiceError> {
        {
            let mut registry = self.registry();
            if registry.live >= self.max_sessions {
                return Err(ServiceError::CapacityExceeded(registry.live));
            }
            registry.live += 1;
        }
        match self.start_session().await {
            Ok(created) => Ok(created),
            Err(e) => {
                release(&self.registry);
                Err(e)
            }
        }
    }

    async fn start_session(&self) -> Result<(String, Vec<WireMessage>), ServiceError> {
        let backend = (self.backends)().map_err(ServiceError::BackendFailure)?;
        let session_id = uuid::Uuid::new_v4().to_string();
        let scenario = self.scenario.clone();
        let id = session_id.clone();
        let (session, greeting) = tokio::task::spawn_blocking(move || {
            Session::start(scenario, backend, id, &mut |_| {})
        })
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
        .map_err(|e| ServiceError::from(&e))?;

        let mut transcript = match &self.log_dir {
            Some(dir) => {
                let open = || -> std::io::Result<File> {
                    std::fs::create_dir_all(dir)?;
                    File::create(dir.join(format!("{session_id}.jsonl")))
                };
                let file = open().map_err(|e| ServiceError::Internal(format!("opening transcript: {e}")))?;
                Some(TranscriptWriter::new(BufWriter::new(file)))
            }
            None => None,
        };
        if let Some(writer) = transcript.as_mut() {
            writer.write_turn(&greeting).map_err(|e| ServiceError::Internal(format!("writing transcript: {e}")))?;
        }

        let channel = Arc::new(Channel::new(session_id.clone(), session.state().clone()));
        let mut messages: Vec<WireMessage> = greeting
            .segments
            .iter()
            .map(|s| channel.publish(WireBody::SpeechSegment { turn_index: greeting.system_turn.index, segment: s.clone() }))
            .collect();
        messages.extend(channel.finish_turn(None, turn_end_bodies(&greeting, session.state())));

        let (queue, commands) = mpsc::unbounded_channel();
        self.registry().sessions.insert(session_id.clone(), Entry { channel: channel.clone(), queue });
        tokio::spawn(run_worker(session, commands, channel, transcript, self.registry.clone()));
        tracing::info!(session = %session_id, "session created");
        Ok((session_id, messages))
    }

    /// Queues an utterance. Results arrive on the session's message stream.
    pub fn post_utterance(&self, session_id: &str, text: &str) -> Result<(), ServiceError> {
        if text.trim().is_empty() {
            return Err(ServiceError::UtteranceRejected("empty".into()));
        }
        let registry = self.registry();
        let entry = registry.sessions.get(session_id).ok_or_else(|| ServiceError::UnknownSession(session_id.to_owned()))?;
        if entry.channel.state().status != SessionStatus::Active {
            return Err(ServiceError::SessionNotActive);
        }
        entry.queue.send(text.to_owned()).map_err(|_| ServiceError::SessionNotActive)
    }
}

async fn run_worker(
    mut session: Session,
    mut commands: mpsc::UnboundedReceiver<String>,
    channel: Arc<Channel>,
    mut transcript: Option<TranscriptWriter<BufWriter<File>>>,
    registry: Arc<Mutex<Registry>>,
) {
    while let Some(text) = commands.recv().await {
        if session.state().status != SessionStatus::Active {
            channel.finish_turn(None, vec![error_body(&ServiceError::SessionNotActive)]);
            continue;
        }
        let index = session.state().history.last().map_or(0, |t| t.index + 1);
        channel.publish_customer(DialogueTurn::new(Speaker::Customer, text.trim(), session.state().current_phase, index));

        let worker_channel = channel.clone();
        let joined = tokio::task::spawn_blocking(move || {
            let outcome = session.advance(&text, &mut |segment| worker_channel.publish_segment(index + 1, segment));
            (session, outcome)
        })
        .await;
        let (returned, outcome) = match joined {
            Ok(pair) => pair,
            Err(e) => {
                tracing::error!(error = %e, "session worker panicked");
                channel.finish_turn(None, vec![error_body(&ServiceError::Internal(e.to_string()))]);
                release(&registry);
                return;
            }
        };
        session = returned;
        match outcome {
            Ok(result) => {
                let state = session.state().clone();
                if let Some(writer) = transcript.as_mut() {
                    if let Err(e) = writer.write_turn(&result) {
                        tracing::error!(error = %e, "writing transcript failed");
                    }
                }
                let ended = result.status != SessionStatus::Active;
                channel.finish_turn(Some(state), turn_end_bodies(&result, session.state()));
                if ended {
                    release(&registry);
                }
            }
            Err(e) => {
                tracing::warn!(session = %session.state().session_id, error = %e, "turn failed");
                channel.finish_turn(None, vec![error_body(&ServiceError::from(&e))]);
            }
        }
    }
}

fn error_body(error: &ServiceError) -> WireBody {
    WireBody::Error { code: error.code(), message: error.to_string() }
}
