use serde::{Deserialize, Serialize};

use crate::phase::PhaseId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    System,
    Customer,
}

/// One utterance in the session history.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueTurn {
    pub speaker: Speaker,
    pub text: String,
    pub phase: PhaseId,
    pub index: u64,
}

impl DialogueTurn {
    pub fn new(speaker: Speaker, text: impl Into<String>, phase: PhaseId, index: u64) -> Self {
        Self { speaker, text: text.into(), phase, index }
    }
}

/// Concatenated customer utterances, newline separated.
pub fn customer_text(history: &[DialogueTurn]) -> String {
    history
        .iter()
        .filter(|t| t.speaker == Speaker::Customer)
        .map(|t| t.text.as_str())
        .collect::<Vec<_>>()
        .join("\n")
}
