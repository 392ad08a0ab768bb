//! The five-phase scenario loop.
//!
//! [`advance`] is a pure step: it takes the current state and one customer
//! utterance and returns the next state plus everything the presentation
//! layer needs for that turn. A backend outage leaves the input state
//! untouched; a hook that cannot produce its result fails the session.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{extract_spots, select_top2, CourseCatalog, ExtractionError, SelectionError};
use crate::display::{self, DisplayState};
use crate::gateway::{stream_speech, BackendError, BackendHandle, CallOutcome, FailureKind, GatewayError};
use crate::knowledge::{build_schedule, ClockTime, KnowledgeError, KnowledgeHub, RoutePlan, Schedule, SpotInfo};
use crate::phase::{action_cues, check_transition, ActionCue, EntryHook, PhaseId, PhaseTable, TransitionDecision};
use crate::prompt::{PromptContext, PromptError, PromptLibrary};
use crate::segment::{segment_chunks, PunctuationSet, SpeechSegment};
use crate::sign::strip_end_sign;
use crate::turn::{DialogueTurn, Speaker};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSettings {
    pub punctuation: PunctuationSet,
    pub start_time: ClockTime,
    pub day_cutoff: ClockTime,
}

impl Default for SessionSettings {
    fn default() -> Self {
        Self {
            punctuation: PunctuationSet::default(),
            start_time: ClockTime::new(10, 0).expect("valid"),
            day_cutoff: ClockTime::new(18, 0).expect("valid"),
        }
    }
}

/// Read-only resources shared by every session.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub phases: PhaseTable,
    pub prompts: PromptLibrary,
    pub catalog: CourseCatalog,
    pub knowledge: KnowledgeHub,
    pub settings: SessionSettings,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("phase {phase} uses unknown template {template:?}")]
    UnknownTemplate { phase: PhaseId, template: String },
    #[error("missing backend template {0:?}")]
    MissingBackendTemplate(String),
}

impl Scenario {
    pub fn new(
        phases: PhaseTable,
        prompts: PromptLibrary,
        catalog: CourseCatalog,
        knowledge: KnowledgeHub,
        settings: SessionSettings,
    ) -> Result<Self, ScenarioError> {
        for config in phases.iter() {
            if !prompts.contains(&config.prompt_template_id) {
                return Err(ScenarioError::UnknownTemplate {
                    phase: config.phase,
                    template: config.prompt_template_id.clone(),
                });
            }
        }
        for id in [crate::prompt::COURSE_SELECTION_TEMPLATE, crate::prompt::SPOT_EXTRACTION_TEMPLATE] {
            if !prompts.contains(id) {
                return Err(ScenarioError::MissingBackendTemplate(id.to_owned()));
            }
        }
        Ok(Self { phases, prompts, catalog, knowledge, settings })
    }

    /// Default phases, shipped templates and fixture data.
    pub fn builtin() -> Self {
        let knowledge = KnowledgeHub::builtin();
        let catalog = CourseCatalog::builtin(&knowledge.spots);
        Self::new(PhaseTable::default(), PromptLibrary::builtin(), catalog, knowledge, SessionSettings::default())
            .expect("builtin scenario is consistent")
    }

    pub fn with_phases(mut self, phases: PhaseTable) -> Self {
        self.phases = phases;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Closed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TravelPlan {
    pub courses: [String; 2],
    pub spots: [String; 2],
    pub route: RoutePlan,
    pub schedule: Schedule,
}

impl TravelPlan {
    pub fn describe(&self) -> String {
        format!("観光地: {}、{}\n{}\n{}", self.spots[0], self.spots[1], self.route.narrative, self.schedule.describe())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub current_phase: PhaseId,
    pub turns_in_phase: u32,
    pub history: Vec<DialogueTurn>,
    /// Course ids, empty until the course-selection phase is entered.
    pub selected_courses: Vec<String>,
    /// Canonical spot names, empty until the schedule phase is entered.
    pub decided_spots: Vec<String>,
    pub route: Option<RoutePlan>,
    pub schedule: Option<Schedule>,
    pub final_plan: Option<TravelPlan>,
    pub status: SessionStatus,
    pub display: DisplayState,
    pub failure: Option<String>,
}

impl SessionState {
    pub fn new(session_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            current_phase: PhaseId::IntroductionIceBreaker,
            turns_in_phase: 0,
            history: Vec::new(),
            selected_courses: Vec::new(),
            decided_spots: Vec::new(),
            route: None,
            schedule: None,
            final_plan: None,
            status: SessionStatus::Active,
            display: DisplayState::default(),
            failure: None,
        }
    }

    fn next_index(&self) -> u64 {
        self.history.last().map_or(0, |t| t.index + 1)
    }

    /// Checks the state invariants against `phases`.
    pub fn check_invariants(&self, phases: &PhaseTable) -> Result<(), String> {
        let phase = self.current_phase;
        if self.turns_in_phase > phases.get(phase).max_turns {
            return Err(format!("{} turns in {phase}, cap {}", self.turns_in_phase, phases.get(phase).max_turns));
        }
        if !self.history.windows(2).all(|w| w[0].index < w[1].index) {
            return Err("history indices not increasing".into());
        }
        if !self.history.windows(2).all(|w| w[0].phase <= w[1].phase) {
            return Err("history phases decrease".into());
        }
        if self.history.iter().any(|t| t.text.trim().is_empty()) {
            return Err("empty turn text".into());
        }
        let failed = self.status == SessionStatus::Failed;
        if phase >= PhaseId::CourseSpotSelection && self.selected_courses.len() != 2 && !failed {
            return Err(format!("{} selected courses in {phase}", self.selected_courses.len()));
        }
        if phase < PhaseId::CourseSpotSelection && !self.selected_courses.is_empty() {
            return Err("courses selected before the course phase".into());
        }
        if phase >= PhaseId::ScheduleProposal && self.decided_spots.len() != 2 && !failed {
            return Err(format!("{} decided spots in {phase}", self.decided_spots.len()));
        }
        if self.final_plan.is_some() != (self.status == SessionStatus::Closed) {
            return Err("final plan present iff closed".into());
        }
        if self.display.slots.len() > display::MAX_SLOTS {
            return Err("more than four display slots".into());
        }
        Ok(())
    }
}

/// Everything one system turn produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnResult {
    pub customer_turn: Option<DialogueTurn>,
    pub system_turn: DialogueTurn,
    pub segments: Vec<SpeechSegment>,
    pub display: DisplayState,
    pub cues: Vec<ActionCue>,
    pub decision: TransitionDecision,
    pub phase_before: PhaseId,
    pub phase_after: PhaseId,
    pub status: SessionStatus,
    /// Every backend attempt made during the turn, hooks included.
    pub backend_calls: Vec<CallOutcome>,
    pub failure: Option<String>,
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("session is {0:?}, not active")]
    NotActive(SessionStatus),
    #[error("utterance is empty")]
    EmptyUtterance,
    #[error("greeting already given")]
    AlreadyStarted,
    #[error(transparent)]
    Backend(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Error)]
enum HookError {
    #[error(transparent)]
    Backend(GatewayError),
    #[error(transparent)]
    Prompt(PromptError),
    #[error("{0}")]
    Failed(String),
}

impl From<ExtractionError> for HookError {
    fn from(value: ExtractionError) -> Self {
        match value {
            ExtractionError::Backend(e) => HookError::Backend(e),
            ExtractionError::Prompt(e) => HookError::Prompt(e),
            failed @ ExtractionError::Failed { .. } => HookError::Failed(failed.to_string()),
        }
    }
}

impl From<SelectionError> for HookError {
    fn from(value: SelectionError) -> Self {
        match value {
            SelectionError::Prompt(e) => HookError::Prompt(e),
            other => HookError::Failed(other.to_string()),
        }
    }
}

fn course_block(label: &str, course: &crate::catalog::ModelCourse) -> String {
    format!("{label}: {}。{} 主な観光地: {}", course.title, course.summary, course.spots.join("、"))
}

fn spot_facts<'a>(spots: impl IntoIterator<Item = &'a SpotInfo>) -> String {
    spots.into_iter().map(SpotInfo::facts_line).collect::<Vec<_>>().join("\n")
}

/// Slot bindings for the phase prompt.
fn phase_context(scenario: &Scenario, state: &SessionState) -> PromptContext {
    let mut context = PromptContext::new();
    let courses: Vec<_> = state.selected_courses.iter().filter_map(|id| scenario.catalog.get(id)).collect();
    if let [a, b] = courses[..] {
        context.insert("course_a", course_block("Course A", a));
        context.insert("course_b", course_block("Course B", b));
        let mut names: Vec<&str> = Vec::new();
        for name in a.spots.iter().chain(&b.spots) {
            if !names.contains(&name.as_str()) {
                names.push(name);
            }
        }
        context.insert("spot_facts", spot_facts(names.iter().filter_map(|n| scenario.knowledge.get_spot(n).ok())));
    }
    if state.decided_spots.len() == 2 {
        context.insert("decided_spots", state.decided_spots.join("、"));
        context.insert(
            "spot_facts",
            spot_facts(state.decided_spots.iter().filter_map(|n| scenario.knowledge.get_spot(n).ok())),
        );
    }
    if let Some(route) = &state.route {
        context.insert("route", route.narrative.clone());
    }
    if let Some(schedule) = &state.schedule {
        context.insert("schedule", schedule.describe());
    }
    if let (Some(route), Some(schedule), [a, b]) = (&state.route, &state.schedule, &state.decided_spots[..]) {
        context.insert("plan", format!("観光地: {a}、{b}\n{}\n{}", route.narrative, schedule.describe()));
    }
    context
}

fn decided<'a>(scenario: &'a Scenario, state: &SessionState) -> Option<[&'a SpotInfo; 2]> {
    match &state.decided_spots[..] {
        [a, b] => Some([scenario.knowledge.get_spot(a).ok()?, scenario.knowledge.get_spot(b).ok()?]),
        _ => None,
    }
}

fn run_hook(
    hook: EntryHook,
    scenario: &Scenario,
    backend: &BackendHandle,
    state: &mut SessionState,
    tape: &mut Vec<CallOutcome>,
) -> Result<(), HookError> {
    match hook {
        EntryHook::RunCourseSelection => {
            let selection = select_top2(backend, &scenario.prompts, &state.history, &scenario.catalog, tape)?;
            tracing::info!(courses = ?selection.course_ids, source = ?selection.source, "courses selected");
            state.selected_courses = selection.course_ids.to_vec();
        }
        EntryHook::ExtractSpots => {
            let selection_turns: Vec<DialogueTurn> =
                state.history.iter().filter(|t| t.phase == PhaseId::CourseSpotSelection).cloned().collect();
            let mut candidates: Vec<&str> = Vec::new();
            for id in &state.selected_courses {
                for spot in scenario.catalog.get(id).map(|c| c.spots.as_slice()).unwrap_or_default() {
                    if !candidates.contains(&spot.as_str()) {
                        candidates.push(spot);
                    }
                }
            }
            let source_turn = state.history.last().map_or(0, |t| t.index);
            let decision = extract_spots(
                backend,
                &scenario.prompts,
                &selection_turns,
                &candidates,
                &scenario.knowledge.spots,
                source_turn,
                tape,
            )?;
            tracing::info!(spots = ?decision.spots, "spots decided");
            state.decided_spots = decision.spots.to_vec();
        }
        EntryHook::FetchRoute => {
            let [from, to] = decided(scenario, state).ok_or_else(|| HookError::Failed("no decided spots for route".into()))?;
            let route = match scenario.knowledge.find_route(from, to) {
                Ok(route) => route,
                Err(KnowledgeError::NoRoute { .. }) => {
                    tracing::warn!(from = %from.name, to = %to.name, "no route found, using walking estimate");
                    scenario.knowledge.approximate_route(from, to)
                }
                Err(e) => return Err(HookError::Failed(e.to_string())),
            };
            state.route = Some(route);
        }
        EntryHook::BuildSchedule => {
            let spots = decided(scenario, state).ok_or_else(|| HookError::Failed("no decided spots for schedule".into()))?;
            let route = state.route.as_ref().ok_or_else(|| HookError::Failed("no route for schedule".into()))?;
            let schedule = build_schedule(spots, route, scenario.settings.start_time, scenario.settings.day_cutoff)
                .map_err(|e| HookError::Failed(e.to_string()))?;
            state.schedule = Some(schedule);
        }
    }
    Ok(())
}

/// Speaks one system turn: renders the phase prompt, streams the reply into
/// speech segments and returns the raw output and the text to record.
fn speak(
    scenario: &Scenario,
    backend: &BackendHandle,
    state: &SessionState,
    tape: &mut Vec<CallOutcome>,
    emit: &mut dyn FnMut(&SpeechSegment),
) -> Result<(String, String, Vec<SpeechSegment>), SessionError> {
    let config = scenario.phases.get(state.current_phase);
    let prompt = scenario.prompts.render(&config.prompt_template_id, &phase_context(scenario, state), &state.history)?;
    let completion = stream_speech(backend, &prompt, &scenario.settings.punctuation, tape, emit)?;
    let spoken = strip_end_sign(&completion.raw);
    if !spoken.is_empty() {
        return Ok((completion.raw, spoken, completion.segments));
    }
    if completion.raw.contains(crate::sign::END_SIGN) {
        let segments = segment_chunks([config.closing_line.as_str()], &scenario.settings.punctuation);
        for segment in &segments {
            emit(segment);
        }
        return Ok((completion.raw, config.closing_line.clone(), segments));
    }
    Err(SessionError::Backend(GatewayError::Backend {
        source: BackendError::new(FailureKind::Malformed, "empty completion"),
        attempts: 1,
    }))
}

/// Produces the opening greeting. It is recorded in the history but does not
/// count as a turn.
pub fn start(
    scenario: &Scenario,
    backend: &BackendHandle,
    state: &SessionState,
    emit: &mut dyn FnMut(&SpeechSegment),
) -> Result<(SessionState, TurnResult), SessionError> {
    if !state.history.is_empty() {
        return Err(SessionError::AlreadyStarted);
    }
    let mut next = state.clone();
    let mut tape = Vec::new();
    let (_, spoken, segments) = speak(scenario, backend, &next, &mut tape, emit)?;
    let phase = next.current_phase;
    let system_turn = DialogueTurn::new(Speaker::System, spoken.clone(), phase, next.next_index());
    next.history.push(system_turn.clone());
    next.display = display::update(&next.display, &spoken, system_turn.index, &scenario.knowledge.spots, &scenario.catalog);
    let result = TurnResult {
        customer_turn: None,
        system_turn,
        segments,
        display: next.display.clone(),
        cues: scenario.phases.entry_cues(phase),
        decision: TransitionDecision::Stay,
        phase_before: phase,
        phase_after: phase,
        status: next.status,
        backend_calls: tape,
        failure: None,
    };
    Ok((next, result))
}

/// One turn: the customer speaks, the system answers, and the phase may end.
pub fn advance(
    scenario: &Scenario,
    backend: &BackendHandle,
    state: &SessionState,
    customer_utterance: &str,
    emit: &mut dyn FnMut(&SpeechSegment),
) -> Result<(SessionState, TurnResult), SessionError> {
    if state.status != SessionStatus::Active {
        return Err(SessionError::NotActive(state.status));
    }
    let utterance = customer_utterance.trim();
    if utterance.is_empty() {
        return Err(SessionError::EmptyUtterance);
    }
    let mut next = state.clone();
    let mut tape = Vec::new();
    let phase = next.current_phase;
    let customer_turn = DialogueTurn::new(Speaker::Customer, utterance, phase, next.next_index());
    next.history.push(customer_turn.clone());

    let (raw, spoken, segments) = speak(scenario, backend, &next, &mut tape, emit)?;
    let system_turn = DialogueTurn::new(Speaker::System, spoken.clone(), phase, next.next_index());
    next.history.push(system_turn.clone());
    next.turns_in_phase += 1;
    next.display = display::update(&next.display, &spoken, system_turn.index, &scenario.knowledge.spots, &scenario.catalog);

    let decision = check_transition(&raw, next.turns_in_phase, scenario.phases.get(phase));
    let cues = action_cues(decision, phase, &scenario.phases);
    let mut failure = None;
    match decision {
        TransitionDecision::Stay => {}
        TransitionDecision::AdvanceBySign | TransitionDecision::AdvanceByCap => {
            let entered = phase.next().expect("non-terminal phase has a successor");
            tracing::info!(session = %next.session_id, from = %phase, to = %entered, ?decision, "phase transition");
            next.current_phase = entered;
            next.turns_in_phase = 0;
            for &hook in &scenario.phases.get(entered).entry_hooks {
                match run_hook(hook, scenario, backend, &mut next, &mut tape) {
                    Ok(()) => {}
                    Err(HookError::Backend(e)) => return Err(SessionError::Backend(e)),
                    Err(HookError::Prompt(e)) => return Err(SessionError::Prompt(e)),
                    Err(HookError::Failed(reason)) => {
                        tracing::error!(session = %next.session_id, ?hook, %reason, "entry hook failed");
                        failure = Some(format!("{hook:?}: {reason}"));
                        next.status = SessionStatus::Failed;
                        next.failure = failure.clone();
                        break;
                    }
                }
            }
            next.display = display::reset_for_phase(&next.display, entered, decided(scenario, &next));
        }
        TransitionDecision::Close => {
            let plan = match (&next.route, &next.schedule, &next.selected_courses[..], &next.decided_spots[..]) {
                (Some(route), Some(schedule), [c1, c2], [s1, s2]) => Some(TravelPlan {
                    courses: [c1.clone(), c2.clone()],
                    spots: [s1.clone(), s2.clone()],
                    route: route.clone(),
                    schedule: schedule.clone(),
                }),
                _ => None,
            };
            match plan {
                Some(plan) => {
                    tracing::info!(session = %next.session_id, "session closed");
                    next.final_plan = Some(plan);
                    next.status = SessionStatus::Closed;
                }
                None => {
                    failure = Some("closing without a complete plan".to_owned());
                    next.status = SessionStatus::Failed;
                    next.failure = failure.clone();
                }
            }
        }
    }

    let result = TurnResult {
        customer_turn: Some(customer_turn),
        system_turn,
        segments,
        display: next.display.clone(),
        cues,
        decision,
        phase_before: phase,
        phase_after: next.current_phase,
        status: next.status,
        backend_calls: tape,
        failure,
    };
    Ok((next, result))
}

/// A session bound to its scenario and backend. Mutations go through
/// [`Session::start`] and [`Session::advance`] only.
#[derive(Debug, Clone)]
pub struct Session {
    scenario: Arc<Scenario>,
    backend: BackendHandle,
    state: SessionState,
}

impl Session {
    /// Creates the session and speaks the greeting.
    pub fn start(
        scenario: Arc<Scenario>,
        backend: BackendHandle,
        session_id: impl Into<String>,
        emit: &mut dyn FnMut(&SpeechSegment),
    ) -> Result<(Self, TurnResult), SessionError> {
        let (state, greeting) = start(&scenario, &backend, &SessionState::new(session_id), emit)?;
        Ok((Self { scenario, backend, state }, greeting))
    }

    pub fn advance(
        &mut self,
        customer_utterance: &str,
        emit: &mut dyn FnMut(&SpeechSegment),
    ) -> Result<TurnResult, SessionError> {
        let (state, result) = advance(&self.scenario, &self.backend, &self.state, customer_utterance, emit)?;
        self.state = state;
        Ok(result)
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }
}
