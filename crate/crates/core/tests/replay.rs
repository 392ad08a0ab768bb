//! Replaying recorded transcripts.

use std::io::Cursor;
use std::path::PathBuf;
use std::sync::Arc;

use tourguide_core::session::{Scenario, SessionStatus};
use tourguide_core::simulate::{run_simulation, SimulationScript};
use tourguide_core::transcript::{parse_transcript, read_transcript, replay, ReplayError, TranscriptError, TranscriptWriter};
use tourguide_core::turn::Speaker;

fn scenarios() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

#[test]
fn golden_transcript_replays_to_its_logged_state() {
    let records = read_transcript(&scenarios().join("kyoto_day_trip.jsonl")).unwrap();
    let outcome = replay(Arc::new(Scenario::builtin()), &records, 1).unwrap();
    assert!(outcome.matches_log());
    assert_eq!(outcome.state.status, SessionStatus::Closed);
    let plan = outcome.state.final_plan.unwrap();
    assert_eq!(plan.spots, ["清水寺", "金閣寺"]);
}

#[test]
fn simulation_and_its_transcript_agree() {
    let script = SimulationScript::load(&scenarios().join("kyoto_day_trip.script")).unwrap();
    let scenario = Arc::new(Scenario::builtin());
    let report = run_simulation(scenario.clone(), &script, script.backend(), &mut |_| {}).unwrap();
    let mut writer = TranscriptWriter::new(Vec::new());
    for turn in &report.turns {
        writer.write_turn(turn).unwrap();
    }
    let records = parse_transcript(Cursor::new(writer.into_inner())).unwrap();
    let outcome = replay(scenario, &records, 1).unwrap();
    assert!(outcome.matches_log());
    assert_eq!(outcome.state.final_plan, report.state.final_plan);
    assert_eq!(outcome.display, report.state.display);
}

#[test]
fn unknown_spot_in_customer_text_does_not_change_the_outcome() {
    let mut records = read_transcript(&scenarios().join("kyoto_day_trip.jsonl")).unwrap();
    let original = replay(Arc::new(Scenario::builtin()), &records, 1).unwrap();
    for record in records.iter_mut().filter(|r| r.speaker == Speaker::Customer) {
        record.text.push_str("あと、東京タワーにも行きたいです。");
    }
    let edited = replay(Arc::new(Scenario::builtin()), &records, 1).unwrap();
    assert!(edited.matches_log());
    assert_eq!(edited.state.current_phase, original.state.current_phase);
    assert_eq!(edited.display, original.display);
    assert_eq!(edited.state.final_plan, original.state.final_plan);
}

#[test]
fn empty_transcript_is_rejected() {
    assert!(matches!(parse_transcript(Cursor::new("")), Err(TranscriptError::Empty)));
    assert!(matches!(replay(Arc::new(Scenario::builtin()), &[], 1), Err(ReplayError::Transcript(TranscriptError::Empty))));
}

#[test]
fn customer_turn_after_close_is_a_structure_error() {
    let mut records = read_transcript(&scenarios().join("kyoto_day_trip.jsonl")).unwrap();
    let extra = records.iter().rev().find(|r| r.speaker == Speaker::Customer).unwrap().clone();
    records.push(extra);
    assert!(matches!(replay(Arc::new(Scenario::builtin()), &records, 1), Err(ReplayError::Structure(_))));
}
