//! Punctuation-boundary segmentation of a streaming completion.
//!
//! A segment closes at the end of a punctuation run. The run is known to be
//! over when the next non-punctuation character arrives, so a segment is
//! released before any text after its closing punctuation is consumed.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_PUNCTUATION: &str = "。、！？!?.,";

#[derive(Debug, Error, PartialEq, Eq)]
#[error("punctuation set must not be empty")]
pub struct EmptyPunctuation;

/// Characters that close a speech segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PunctuationSet(BTreeSet<char>);

impl PunctuationSet {
    pub fn new(chars: impl IntoIterator<Item = char>) -> Result<Self, EmptyPunctuation> {
        let set: BTreeSet<char> = chars.into_iter().collect();
        if set.is_empty() {
            return Err(EmptyPunctuation);
        }
        Ok(Self(set))
    }

    pub fn contains(&self, c: char) -> bool {
        self.0.contains(&c)
    }
}

impl Default for PunctuationSet {
    fn default() -> Self {
        Self::new(DEFAULT_PUNCTUATION.chars()).expect("default set is non-empty")
    }
}

impl TryFrom<String> for PunctuationSet {
    type Error = EmptyPunctuation;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value.chars())
    }
}

impl From<PunctuationSet> for String {
    fn from(value: PunctuationSet) -> Self {
        value.0.into_iter().collect()
    }
}

/// A fragment of system speech ready for delivery.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeechSegment {
    pub text: String,
    pub index: u32,
    /// Set on the end-of-stream flush segment.
    pub terminal: bool,
}

/// Streaming segmenter. Holds at most one unterminated segment.
#[derive(Debug, Clone)]
pub struct Segmenter {
    punctuation: PunctuationSet,
    pending: String,
    in_punct_run: bool,
    next_index: u32,
}

impl Segmenter {
    pub fn new(punctuation: PunctuationSet) -> Self {
        Self { punctuation, pending: String::new(), in_punct_run: false, next_index: 0 }
    }

    /// Feeds a chunk, calling `emit` for each segment closed by it.
    pub fn push(&mut self, chunk: &str, emit: &mut dyn FnMut(SpeechSegment)) {
        for c in chunk.chars() {
            let is_punct = self.punctuation.contains(c);
            if self.in_punct_run && !is_punct {
                let text = std::mem::take(&mut self.pending);
                emit(self.make(text, false));
            }
            self.in_punct_run = is_punct;
            self.pending.push(c);
        }
    }

    /// Flushes the remaining text as the terminal segment, if any.
    pub fn finish(&mut self) -> Option<SpeechSegment> {
        self.in_punct_run = false;
        if self.pending.is_empty() {
            return None;
        }
        let text = std::mem::take(&mut self.pending);
        Some(self.make(text, true))
    }

    pub fn emitted(&self) -> u32 {
        self.next_index
    }

    fn make(&mut self, text: String, terminal: bool) -> SpeechSegment {
        let index = self.next_index;
        self.next_index += 1;
        SpeechSegment { text, index, terminal }
    }
}

/// Segments a complete chunk sequence.
pub fn segment_chunks<'a>(
    chunks: impl IntoIterator<Item = &'a str>,
    punctuation: &PunctuationSet,
) -> Vec<SpeechSegment> {
    let mut segmenter = Segmenter::new(punctuation.clone());
    let mut out = Vec::new();
    for chunk in chunks {
        segmenter.push(chunk, &mut |s| out.push(s));
    }
    out.extend(segmenter.finish());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(segments: &[SpeechSegment]) -> Vec<&str> {
        segments.iter().map(|s| s.text.as_str()).collect()
    }

    #[test]
    fn splits_on_sentence_marks() {
        let segments = segment_chunks(["こん", "にちは。", "元気", "ですか？"], &PunctuationSet::default());
        assert_eq!(texts(&segments), ["こんにちは。", "元気ですか？"]);
        assert!(!segments[0].terminal);
        assert!(segments[1].terminal);
        assert_eq!(segments[1].index, 1);
    }

    #[test]
    fn unpunctuated_text_is_flushed() {
        let segments = segment_chunks(["はい"], &PunctuationSet::default());
        assert_eq!(segments, [SpeechSegment { text: "はい".into(), index: 0, terminal: true }]);
    }

    #[test]
    fn punctuation_run_stays_together() {
        let segments = segment_chunks(["え？！", "本当", "…"], &PunctuationSet::default());
        assert_eq!(texts(&segments), ["え？！", "本当…"]);
    }

    #[test]
    fn comma_is_a_boundary_by_default() {
        let segments = segment_chunks(["はい、そうです。"], &PunctuationSet::default());
        assert_eq!(texts(&segments), ["はい、", "そうです。"]);
    }

    #[test]
    fn sentence_only_set() {
        let set = PunctuationSet::new("。？".chars()).unwrap();
        let segments = segment_chunks(["はい、そうです。"], &set);
        assert_eq!(texts(&segments), ["はい、そうです。"]);
    }

    #[test]
    fn empty_set_rejected() {
        assert_eq!(PunctuationSet::new([]), Err(EmptyPunctuation));
    }

    #[test]
    fn segment_released_before_following_text() {
        let mut seg = Segmenter::new(PunctuationSet::default());
        let mut seen = Vec::new();
        seg.push("こんにちは。", &mut |s| seen.push(s.text));
        assert!(seen.is_empty(), "run may continue into the next chunk");
        seg.push("元", &mut |s| seen.push(s.text));
        assert_eq!(seen, ["こんにちは。"]);
    }

    #[test]
    fn empty_stream_yields_nothing() {
        assert!(segment_chunks([""; 3], &PunctuationSet::default()).is_empty());
    }
}
