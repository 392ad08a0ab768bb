//! Phase-driven travel-planning dialogue engine.
//!
//! A session walks five phases (icebreak, inquiry, main proposal,
//! schedule, closing). Each turn streams a backend completion through the
//! end-sign filter and punctuation segmenter, updates the display, and
//! checks for a phase transition.

pub mod catalog;
pub mod display;
pub mod gateway;
pub mod knowledge;
pub mod phase;
pub mod prompt;
pub mod segment;
pub mod session;
pub mod simulate;
pub mod sign;
pub mod text;
pub mod transcript;
pub mod turn;
