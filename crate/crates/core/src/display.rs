//! Viewer display state: up to four spot cards or one course's image list.
//!
//! The state is updated once per system turn from the full utterance text.
//! A course title wins over spot names in the same utterance. Spot cards
//! fill four slots in mention order; once full, only the fourth slot is
//! replaced.

use serde::{Deserialize, Serialize};

use crate::catalog::{CourseCatalog, ModelCourse};
use crate::knowledge::{MapPoint, SpotDirectory, SpotInfo};
use crate::phase::PhaseId;

pub const MAX_SLOTS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotCard {
    pub name: String,
    pub furigana: String,
    pub image_ref: String,
    pub map_point: MapPoint,
    pub shown_since_turn: u64,
}

impl SpotCard {
    pub fn new(spot: &SpotInfo, turn: u64) -> Self {
        Self {
            name: spot.name.clone(),
            furigana: spot.furigana.clone(),
            image_ref: spot.image_ref.clone(),
            map_point: spot.map_point,
            shown_since_turn: turn,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CourseView {
    pub course_id: String,
    pub title: String,
    pub hero_images: Vec<String>,
}

impl From<&ModelCourse> for CourseView {
    fn from(course: &ModelCourse) -> Self {
        Self { course_id: course.course_id.clone(), title: course.title.clone(), hero_images: course.hero_images.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisplayMode {
    #[default]
    SpotSlots,
    CourseList,
}

/// Slots are kept while a course is shown and come back when the course
/// list is left.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DisplayState {
    pub mode: DisplayMode,
    pub slots: Vec<SpotCard>,
    pub course: Option<CourseView>,
    pub maps_enabled: bool,
    pub turn_index: u64,
}

impl DisplayState {
    pub fn slot_names(&self) -> Vec<&str> {
        self.slots.iter().map(|c| c.name.as_str()).collect()
    }

    /// Applies the spot rule for one mention.
    fn show_spot(&mut self, spot: &SpotInfo, turn: u64) {
        if self.slots.iter().any(|c| c.name == spot.name) {
            return;
        }
        let card = SpotCard::new(spot, turn);
        if self.slots.len() < MAX_SLOTS {
            self.slots.push(card);
        } else {
            self.slots[MAX_SLOTS - 1] = card;
        }
    }
}

/// Derives the display after one system utterance (sign already stripped).
pub fn update(
    state: &DisplayState,
    system_utterance: &str,
    turn_index: u64,
    spots: &SpotDirectory,
    courses: &CourseCatalog,
) -> DisplayState {
    let mut next = state.clone();
    next.turn_index = turn_index;
    if let Some(course) = courses.titles_in(system_utterance).first() {
        next.mode = DisplayMode::CourseList;
        next.course = Some(CourseView::from(*course));
        return next;
    }
    let mentioned = spots.mentioned_in(system_utterance);
    if mentioned.is_empty() {
        return next;
    }
    next.mode = DisplayMode::SpotSlots;
    next.course = None;
    for spot in mentioned {
        next.show_spot(spot, turn_index);
    }
    next
}

/// The display on entering `phase`.
///
/// The schedule phase shows the two decided spots with maps; closing shows
/// them again. Every other phase starts empty.
pub fn reset_for_phase(state: &DisplayState, phase: PhaseId, decided: Option<[&SpotInfo; 2]>) -> DisplayState {
    let turn_index = state.turn_index;
    match (phase, decided) {
        (PhaseId::ScheduleProposal | PhaseId::ConfirmationClosing, Some(decided)) => DisplayState {
            mode: DisplayMode::SpotSlots,
            slots: decided.iter().map(|s| SpotCard::new(s, turn_index)).collect(),
            course: None,
            maps_enabled: true,
            turn_index,
        },
        _ => DisplayState { turn_index, ..DisplayState::default() },
    }
}
