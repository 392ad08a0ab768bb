//! Whole-session properties under randomized backends, plus the failure paths
//! of the entry hooks.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use proptest::prelude::*;
use tourguide_core::gateway::{
    Backend, BackendError, BackendHandle, BackendKind, ChunkStream, FailureKind, ScriptEntry, ScriptedBackend, TokenChunk,
};
use tourguide_core::knowledge::{ClockTime, FixtureRoutes};
use tourguide_core::phase::{PhaseId, PhaseTable, TransitionDecision};
use tourguide_core::prompt::{RenderedPrompt, COURSE_SELECTION_TEMPLATE, SPOT_EXTRACTION_TEMPLATE};
use tourguide_core::segment::SpeechSegment;
use tourguide_core::session::{Scenario, Session, SessionError, SessionStatus};
use tourguide_core::sign::END_SIGN;

/// Speech replies follow a plan of sign placements; hook prompts get fixed
/// well-formed answers.
struct Planned {
    plan: Mutex<VecDeque<Option<usize>>>,
    chunk_chars: usize,
    spots: String,
}

const SPEECH: &str = "清水寺はいかがですか。紅葉がきれいです！";

impl Backend for Planned {
    fn open(&self, prompt: &RenderedPrompt) -> Result<ChunkStream, BackendError> {
        let text = match prompt.template_id.as_str() {
            COURSE_SELECTION_TEMPLATE => "COURSES: c01, c02".to_owned(),
            SPOT_EXTRACTION_TEMPLATE => format!("SPOTS: {}", self.spots),
            _ => {
                let chars: Vec<char> = SPEECH.chars().collect();
                match self.plan.lock().unwrap().pop_front().flatten() {
                    Some(at) => {
                        let at = at.min(chars.len());
                        format!("{}{END_SIGN}{}", chars[..at].iter().collect::<String>(), chars[at..].iter().collect::<String>())
                    }
                    None => SPEECH.to_owned(),
                }
            }
        };
        let chars: Vec<char> = text.chars().collect();
        let pieces: Vec<String> = chars.chunks(self.chunk_chars).map(|c| c.iter().collect()).collect();
        let last = pieces.len().saturating_sub(1);
        Ok(Box::new(pieces.into_iter().enumerate().map(move |(i, p)| Ok(TokenChunk::new(p, i == last)))))
    }
}

fn planned(plan: Vec<Option<usize>>, chunk_chars: usize, spots: &str) -> BackendHandle {
    let backend = Planned { plan: Mutex::new(plan.into()), chunk_chars, spots: spots.to_owned() };
    BackendHandle::new(BackendKind::ScriptedMock, "planned", Arc::new(backend))
}

fn scenario_with_caps(caps: [u32; 5]) -> Arc<Scenario> {
    Arc::new(Scenario::builtin().with_phases(PhaseTable::default().with_caps(caps).unwrap()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn sessions_are_monotone_live_and_consistent(
        caps in prop::array::uniform5(1u32..=4),
        // The greeting consumes the first plan entry.
        plan in prop::collection::vec(prop::option::weighted(0.3, 0usize..30), 0..40),
        chunk_chars in 1usize..7,
    ) {
        let scenario = scenario_with_caps(caps);
        let backend = planned(plan.clone(), chunk_chars, "清水寺、金閣寺");
        let mut segments: Vec<SpeechSegment> = Vec::new();
        let (mut session, _) = Session::start(scenario.clone(), backend, "p", &mut |s| segments.push(s.clone())).unwrap();
        let budget: u32 = caps.iter().sum();
        let mut turns = 0u32;
        while session.state().status == SessionStatus::Active {
            prop_assert!(turns < budget, "still active after {} turns", turns);
            let before = session.state().clone();
            let signed = plan.get(turns as usize + 1).copied().flatten().is_some();
            let result = session.advance("はい、そうですね。", &mut |s| segments.push(s.clone())).unwrap();
            turns += 1;
            let state = session.state();
            state.check_invariants(&scenario.phases).map_err(TestCaseError::fail)?;

            prop_assert_eq!(result.phase_before, before.current_phase);
            prop_assert!(result.phase_after.ordinal() - result.phase_before.ordinal() <= 1);
            let cap = scenario.phases.get(before.current_phase).max_turns;
            let terminal = before.current_phase == PhaseId::ConfirmationClosing;
            let expected = match (signed, before.turns_in_phase + 1 >= cap, terminal) {
                (true, _, false) => TransitionDecision::AdvanceBySign,
                (false, true, false) => TransitionDecision::AdvanceByCap,
                (_, _, true) if signed || before.turns_in_phase + 1 >= cap => TransitionDecision::Close,
                _ => TransitionDecision::Stay,
            };
            prop_assert_eq!(result.decision, expected);
            prop_assert!(!result.system_turn.text.contains(END_SIGN));
        }
        prop_assert!(turns <= budget);
        prop_assert_eq!(session.state().status, SessionStatus::Closed);
        prop_assert!(segments.iter().all(|s| !s.text.contains(END_SIGN)));
    }
}

#[test]
fn extraction_failure_fails_the_session() {
    let scenario = scenario_with_caps([1, 1, 1, 1, 1]);
    let backend = planned(vec![], 3, "東京タワー");
    let (mut session, _) = Session::start(scenario.clone(), backend, "f", &mut |_| {}).unwrap();
    for _ in 0..3 {
        session.advance("はい。", &mut |_| {}).unwrap();
    }
    let state = session.state();
    assert_eq!(state.status, SessionStatus::Failed);
    assert!(state.failure.as_deref().unwrap().contains("ExtractSpots"));
    state.check_invariants(&scenario.phases).unwrap();
    assert!(matches!(session.advance("もしもし", &mut |_| {}), Err(SessionError::NotActive(SessionStatus::Failed))));
}

#[test]
fn missing_route_uses_walking_estimate() {
    let routes = FixtureRoutes::builtin();
    let scenario = scenario_with_caps([1, 1, 1, 1, 1]);
    let names: Vec<&str> = scenario.knowledge.spots.spots().iter().map(|s| s.name.as_str()).collect();
    let known: Vec<(&str, &str)> = routes.pairs().collect();
    let (a, b) = names
        .iter()
        .flat_map(|a| names.iter().map(move |b| (*a, *b)))
        .find(|(a, b)| a != b && !known.iter().any(|&(x, y)| (x, y) == (*a, *b) || (x, y) == (*b, *a)))
        .expect("some pair has no fixture route");
    let backend = planned(vec![], 4, &format!("{a}、{b}"));
    let (mut session, _) = Session::start(scenario.clone(), backend, "r", &mut |_| {}).unwrap();
    for _ in 0..3 {
        session.advance("はい。", &mut |_| {}).unwrap();
    }
    let route = session.state().route.clone().expect("route fetched");
    assert!(route.approximate);
    assert_eq!((route.from.as_str(), route.to.as_str()), (a, b));
    assert!(session.state().schedule.as_ref().unwrap().is_strictly_increasing());
}

#[test]
fn schedule_past_cutoff_fails_the_session() {
    let mut scenario = Scenario::builtin().with_phases(PhaseTable::default().with_caps([1, 1, 1, 1, 1]).unwrap());
    scenario.settings.start_time = ClockTime::new(17, 30).unwrap();
    let backend = planned(vec![], 4, "清水寺、金閣寺");
    let (mut session, _) = Session::start(Arc::new(scenario), backend, "d", &mut |_| {}).unwrap();
    for _ in 0..3 {
        session.advance("はい。", &mut |_| {}).unwrap();
    }
    assert_eq!(session.state().status, SessionStatus::Failed);
    assert!(session.state().failure.as_deref().unwrap().contains("BuildSchedule"));
}

#[test]
fn hook_outage_leaves_state_unchanged() {
    let scenario = scenario_with_caps([1, 1, 1, 1, 1]);
    let entries = [
        ScriptEntry::Reply("こんにちは。".into()),
        ScriptEntry::Reply("よろしくお願いします。".into()),
        ScriptEntry::Reply("ご希望を伺います。".into()),
        ScriptEntry::Reply("コースをご紹介します。".into()),
        ScriptEntry::Reply("COURSES: c01, c02".into()),
        ScriptEntry::Reply("清水寺と金閣寺ですね。".into()),
        ScriptEntry::Fail(FailureKind::Unavailable),
    ];
    let backend = BackendHandle::scripted(ScriptedBackend::new(entries)).with_max_retries(0);
    let (mut session, _) = Session::start(scenario, backend, "o", &mut |_| {}).unwrap();
    session.advance("はい。", &mut |_| {}).unwrap();
    session.advance("紅葉が見たいです。", &mut |_| {}).unwrap();
    assert_eq!(session.state().current_phase, PhaseId::CourseSpotSelection);
    let before = session.state().clone();
    let err = session.advance("清水寺と金閣寺にします。", &mut |_| {}).unwrap_err();
    assert!(matches!(err, SessionError::Backend(_)), "{err}");
    assert_eq!(session.state(), &before);
}

#[test]
fn empty_completion_is_malformed() {
    let backend = BackendHandle::scripted(ScriptedBackend::from_replies(["こんにちは。", "   "]));
    let (mut session, _) = Session::start(Arc::new(Scenario::builtin()), backend, "e", &mut |_| {}).unwrap();
    let before = session.state().clone();
    match session.advance("はい", &mut |_| {}) {
        Err(SessionError::Backend(e)) => assert_eq!(e.kind(), Some(FailureKind::Malformed)),
        other => panic!("expected malformed, got {other:?}"),
    }
    assert_eq!(session.state(), &before);
}
