//! The five scenario phases and the rules for leaving them.
//!
//! A phase ends either when the model emits the termination sign or when the
//! customer has taken `max_turns` turns in it. The sign wins when both hold.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sign::contains_end_sign;

/// One of the five scenario phases, ordered by ordinal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum PhaseId {
    IntroductionIceBreaker = 1,
    Inquiry = 2,
    CourseSpotSelection = 3,
    ScheduleProposal = 4,
    ConfirmationClosing = 5,
}

impl PhaseId {
    pub const ALL: [PhaseId; 5] = [
        PhaseId::IntroductionIceBreaker,
        PhaseId::Inquiry,
        PhaseId::CourseSpotSelection,
        PhaseId::ScheduleProposal,
        PhaseId::ConfirmationClosing,
    ];

    pub fn ordinal(self) -> u8 {
        self as u8
    }

    pub fn from_ordinal(ordinal: u8) -> Option<Self> {
        Self::ALL.get(usize::from(ordinal).checked_sub(1)?).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            PhaseId::IntroductionIceBreaker => "Introduction&IceBreaker",
            PhaseId::Inquiry => "Inquiry",
            PhaseId::CourseSpotSelection => "Course&SpotSelection",
            PhaseId::ScheduleProposal => "ScheduleProposal",
            PhaseId::ConfirmationClosing => "Confirmation&Closing",
        }
    }

    /// The following phase, or `None` from the terminal phase.
    pub fn next(self) -> Option<Self> {
        Self::from_ordinal(self.ordinal() + 1)
    }

    pub fn is_terminal(self) -> bool {
        self == PhaseId::ConfirmationClosing
    }
}

impl fmt::Display for PhaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}. {}", self.ordinal(), self.name())
    }
}

impl TryFrom<u8> for PhaseId {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Self::from_ordinal(value).ok_or_else(|| format!("phase ordinal out of range: {value}"))
    }
}

impl From<PhaseId> for u8 {
    fn from(value: PhaseId) -> Self {
        value.ordinal()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CueKind {
    Bow,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CueTiming {
    PhaseEntry,
    PhaseExit,
}

/// An abstract physical action for the embodiment layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionCue {
    pub kind: CueKind,
    pub timing: CueTiming,
}

impl ActionCue {
    pub const fn bow(timing: CueTiming) -> Self {
        Self { kind: CueKind::Bow, timing }
    }
}

/// Backend work that runs when a phase is entered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntryHook {
    /// Pick the two model courses from the inquiry history.
    RunCourseSelection,
    /// Extract the two decided spots from the course-introduction history.
    ExtractSpots,
    /// Look up the route between the decided spots.
    FetchRoute,
    /// Lay out the visit schedule from the spots and route.
    BuildSchedule,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub phase: PhaseId,
    pub max_turns: u32,
    pub end_sign_enabled: bool,
    pub prompt_template_id: String,
    #[serde(default)]
    pub entry_actions: Vec<ActionCue>,
    #[serde(default)]
    pub exit_actions: Vec<ActionCue>,
    #[serde(default)]
    pub entry_hooks: Vec<EntryHook>,
    /// Spoken when the model's whole output was the sign.
    pub closing_line: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PhaseTableError {
    #[error("phase {0} has max_turns = 0")]
    ZeroCap(PhaseId),
    #[error("phase table must list phases 1..5 in order, found {found:?} at position {position}")]
    OutOfOrder { position: usize, found: PhaseId },
}

/// Per-phase configuration for the whole scenario, indexed by phase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<PhaseConfig>", into = "Vec<PhaseConfig>")]
pub struct PhaseTable {
    configs: [PhaseConfig; 5],
}

impl PhaseTable {
    pub fn new(configs: [PhaseConfig; 5]) -> Result<Self, PhaseTableError> {
        for (position, (config, expected)) in configs.iter().zip(PhaseId::ALL).enumerate() {
            if config.phase != expected {
                return Err(PhaseTableError::OutOfOrder { position, found: config.phase });
            }
            if config.max_turns == 0 {
                return Err(PhaseTableError::ZeroCap(config.phase));
            }
        }
        Ok(Self { configs })
    }

    pub fn get(&self, phase: PhaseId) -> &PhaseConfig {
        &self.configs[usize::from(phase.ordinal() - 1)]
    }

    pub fn iter(&self) -> impl Iterator<Item = &PhaseConfig> {
        self.configs.iter()
    }

    /// Replaces the turn caps, in phase order.
    pub fn with_caps(mut self, caps: [u32; 5]) -> Result<Self, PhaseTableError> {
        for (config, cap) in self.configs.iter_mut().zip(caps) {
            if cap == 0 {
                return Err(PhaseTableError::ZeroCap(config.phase));
            }
            config.max_turns = cap;
        }
        Ok(self)
    }

    pub fn with_cap(mut self, phase: PhaseId, cap: u32) -> Result<Self, PhaseTableError> {
        if cap == 0 {
            return Err(PhaseTableError::ZeroCap(phase));
        }
        self.configs[usize::from(phase.ordinal() - 1)].max_turns = cap;
        Ok(self)
    }

    pub fn total_turn_budget(&self) -> u32 {
        self.configs.iter().map(|c| c.max_turns).sum()
    }

    pub fn entry_cues(&self, phase: PhaseId) -> Vec<ActionCue> {
        self.get(phase).entry_actions.clone()
    }
}

impl Default for PhaseTable {
    fn default() -> Self {
        let bow_in = vec![ActionCue::bow(CueTiming::PhaseEntry)];
        let bow_out = vec![ActionCue::bow(CueTiming::PhaseExit)];
        let config = |phase, max_turns, template: &str, hooks: Vec<EntryHook>, closing: &str| PhaseConfig {
            phase,
            max_turns,
            end_sign_enabled: true,
            prompt_template_id: template.to_owned(),
            entry_actions: Vec::new(),
            exit_actions: Vec::new(),
            entry_hooks: hooks,
            closing_line: closing.to_owned(),
        };
        let mut configs = [
            config(
                PhaseId::IntroductionIceBreaker,
                3,
                "icebreak",
                vec![],
                "それでは、ご旅行の希望について伺いますね。",
            ),
            config(
                PhaseId::Inquiry,
                5,
                "inquiry",
                vec![],
                "ありがとうございます。お客様に合いそうなコースを選んでみますね。",
            ),
            config(
                PhaseId::CourseSpotSelection,
                10,
                "main",
                vec![EntryHook::RunCourseSelection],
                "では、その二つの観光地で予定を考えてみましょう。",
            ),
            config(
                PhaseId::ScheduleProposal,
                6,
                "schedule",
                vec![EntryHook::ExtractSpots, EntryHook::FetchRoute, EntryHook::BuildSchedule],
                "それでは、最後にプランを確認させてください。",
            ),
            config(
                PhaseId::ConfirmationClosing,
                2,
                "closing",
                vec![],
                "本日はありがとうございました。よい旅を。",
            ),
        ];
        configs[0].entry_actions = bow_in;
        configs[4].exit_actions = bow_out;
        Self::new(configs).expect("default phase table is well formed")
    }
}

impl TryFrom<Vec<PhaseConfig>> for PhaseTable {
    type Error = String;

    fn try_from(value: Vec<PhaseConfig>) -> Result<Self, Self::Error> {
        let configs: [PhaseConfig; 5] = value
            .try_into()
            .map_err(|v: Vec<PhaseConfig>| format!("expected 5 phase configs, found {}", v.len()))?;
        Self::new(configs).map_err(|e| e.to_string())
    }
}

impl From<PhaseTable> for Vec<PhaseConfig> {
    fn from(value: PhaseTable) -> Self {
        value.configs.into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionDecision {
    Stay,
    AdvanceBySign,
    AdvanceByCap,
    Close,
}

impl TransitionDecision {
    pub fn leaves_phase(self) -> bool {
        !matches!(self, TransitionDecision::Stay)
    }
}

/// Decides whether the phase ends after the turn that just completed.
///
/// `turns_in_phase` already counts that turn. In the terminal phase any
/// exit becomes [`TransitionDecision::Close`].
pub fn check_transition(llm_output: &str, turns_in_phase: u32, config: &PhaseConfig) -> TransitionDecision {
    let decision = if config.end_sign_enabled && contains_end_sign(llm_output) {
        TransitionDecision::AdvanceBySign
    } else if turns_in_phase >= config.max_turns {
        TransitionDecision::AdvanceByCap
    } else {
        TransitionDecision::Stay
    };
    if config.phase.is_terminal() && decision.leaves_phase() {
        TransitionDecision::Close
    } else {
        decision
    }
}

/// Cues fired by a decision taken in `phase`: the exit cues of `phase`,
/// then the entry cues of the next phase when advancing.
pub fn action_cues(decision: TransitionDecision, phase: PhaseId, table: &PhaseTable) -> Vec<ActionCue> {
    let mut cues = Vec::new();
    match decision {
        TransitionDecision::Stay => {}
        TransitionDecision::AdvanceBySign | TransitionDecision::AdvanceByCap => {
            cues.extend(table.get(phase).exit_actions.iter().copied());
            if let Some(next) = phase.next() {
                cues.extend(table.get(next).entry_actions.iter().copied());
            }
        }
        TransitionDecision::Close => cues.extend(table.get(phase).exit_actions.iter().copied()),
    }
    cues.retain(|c| c.kind != CueKind::None);
    cues
}
