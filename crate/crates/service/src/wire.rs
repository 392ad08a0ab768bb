//! Messages exchanged with viewers over the session socket.
//!
//! Every server message is one JSON text frame:
//!
//! ```text
//! {"kind": "speech_segment", "session_id": "…", "seq": 12, "payload": {…}}
//! ```
//!
//! `seq` strictly increases per session. The `snapshot` message sent on
//! connect carries the seq of the last message it already accounts for.

use serde::{Deserialize, Serialize};
use tourguide_core::display::DisplayState;
use tourguide_core::phase::{ActionCue, PhaseId, TransitionDecision};
use tourguide_core::segment::SpeechSegment;
use tourguide_core::session::{SessionStatus, TravelPlan};
use tourguide_core::turn::DialogueTurn;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub session_id: String,
    pub seq: u64,
    #[serde(flatten)]
    pub body: WireBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum WireBody {
    CustomerUtterance { index: u64, text: String },
    SpeechSegment { turn_index: u64, segment: SpeechSegment },
    DisplayState { display: DisplayState },
    ActionCue { cue: ActionCue },
    PhaseChanged { from: PhaseId, to: PhaseId, decision: TransitionDecision },
    SessionClosed { status: SessionStatus, plan: Option<TravelPlan>, failure: Option<String> },
    Error { code: ErrorCode, message: String },
    Snapshot(Snapshot),
}

impl WireBody {
    pub fn kind(&self) -> &'static str {
        match self {
            WireBody::CustomerUtterance { .. } => "customer_utterance",
            WireBody::SpeechSegment { .. } => "speech_segment",
            WireBody::DisplayState { .. } => "display_state",
            WireBody::ActionCue { .. } => "action_cue",
            WireBody::PhaseChanged { .. } => "phase_changed",
            WireBody::SessionClosed { .. } => "session_closed",
            WireBody::Error { .. } => "error",
            WireBody::Snapshot(_) => "snapshot",
        }
    }
}

/// Full view of a session for a (re)connecting viewer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub phase: PhaseId,
    pub status: SessionStatus,
    pub turns_in_phase: u32,
    pub history: Vec<DialogueTurn>,
    pub display: DisplayState,
    /// Segments of the turn being spoken right now.
    pub in_flight: Vec<SpeechSegment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorCode {
    UnknownSession,
    SessionNotActive,
    UtteranceRejected,
    CapacityExceeded,
    BackendFailure,
    BadMessage,
    Internal,
}

/// Messages a viewer may send.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum ClientMessage {
    CustomerUtterance { text: String },
}
