//! Model-course catalog, top-two course selection and two-spot extraction.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{BackendHandle, CallOutcome, GatewayError};
use crate::knowledge::{FixtureError, SpotDirectory};
use crate::prompt::{PromptError, PromptLibrary, COURSES_TAG, SPOTS_TAG};
use crate::text::{name_key, NameMatcher};
use crate::turn::{customer_text, DialogueTurn};

const BUILTIN_COURSES: &str = include_str!("../data/courses.toml");
pub const MAX_HERO_IMAGES: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelCourse {
    #[serde(rename = "id")]
    pub course_id: String,
    pub title: String,
    pub summary: String,
    pub persona: String,
    pub spots: Vec<String>,
    pub hero_images: Vec<String>,
}

impl ModelCourse {
    /// One catalog line for the selection prompt.
    pub fn digest_line(&self) -> String {
        format!("{}: {} {} 向いている方: {}", self.course_id, self.title, self.summary, self.persona)
    }

    /// Distinct scoring keywords from title, summary and persona.
    pub fn keywords(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        [&self.title, &self.summary, &self.persona]
            .into_iter()
            .flat_map(|text| keyword_runs(text))
            .filter(|k| seen.insert(k.clone()))
            .collect()
    }
}

fn is_keyword_char(c: char) -> bool {
    matches!(c,
        '\u{4E00}'..='\u{9FFF}' | '\u{3005}' // kanji, 々
        | '\u{30A1}'..='\u{30FA}' | '\u{30FC}' // katakana, ー
        | 'a'..='z' | 'A'..='Z' | '0'..='9')
}

/// Maximal runs of kanji, katakana or ASCII alphanumerics, at least two
/// characters long, ASCII lowercased.
pub fn keyword_runs(text: &str) -> Vec<String> {
    let mut runs = Vec::new();
    let mut current = String::new();
    for c in text.chars().chain(std::iter::once(' ')) {
        if is_keyword_char(c) {
            current.push(c.to_ascii_lowercase());
        } else {
            if current.chars().count() >= 2 {
                runs.push(std::mem::take(&mut current));
            }
            current.clear();
        }
    }
    runs
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error(transparent)]
    Fixture(#[from] FixtureError),
    #[error("course id {0:?} appears twice")]
    DuplicateId(String),
    #[error("course {id}: {reason}")]
    Invalid { id: String, reason: String },
}

#[derive(Deserialize)]
struct CourseFile {
    course: Vec<ModelCourse>,
}

/// Courses in catalog order, indexed by id and title.
#[derive(Debug, Clone)]
pub struct CourseCatalog {
    courses: Vec<ModelCourse>,
    by_id: HashMap<String, usize>,
    titles: NameMatcher,
}

impl CourseCatalog {
    /// Validates ids, image counts and that every spot resolves.
    pub fn new(courses: Vec<ModelCourse>, spots: &SpotDirectory) -> Result<Self, CatalogError> {
        let mut by_id = HashMap::new();
        for (i, course) in courses.iter().enumerate() {
            let invalid = |reason: String| CatalogError::Invalid { id: course.course_id.clone(), reason };
            if course.course_id.trim().is_empty() || course.course_id.chars().any(|c| c.is_whitespace() || c == ',') {
                return Err(invalid("id must be non-empty without spaces or commas".into()));
            }
            if by_id.insert(course.course_id.clone(), i).is_some() {
                return Err(CatalogError::DuplicateId(course.course_id.clone()));
            }
            if course.title.trim().is_empty() {
                return Err(invalid("empty title".into()));
            }
            if course.spots.len() < 2 {
                return Err(invalid(format!("{} spots, at least 2 required", course.spots.len())));
            }
            if let Some(missing) = course.spots.iter().find(|s| !spots.contains(s)) {
                return Err(invalid(format!("spot {missing:?} is not in the spot directory")));
            }
            if course.hero_images.is_empty() || course.hero_images.len() > MAX_HERO_IMAGES {
                return Err(invalid(format!("{} hero images, 1 to {MAX_HERO_IMAGES} allowed", course.hero_images.len())));
            }
        }
        let titles = NameMatcher::new(courses.iter().enumerate().map(|(i, c)| (c.title.as_str(), i)));
        Ok(Self { courses, by_id, titles })
    }

    pub fn parse(source: &str, spots: &SpotDirectory) -> Result<Self, CatalogError> {
        let file: CourseFile = toml::from_str(source)
            .map_err(|source| FixtureError::Parse { what: "course catalog".into(), source })?;
        Self::new(file.course, spots)
    }

    pub fn builtin(spots: &SpotDirectory) -> Self {
        Self::parse(BUILTIN_COURSES, spots).expect("builtin course catalog is valid")
    }

    pub fn load(path: &Path, spots: &SpotDirectory) -> Result<Self, CatalogError> {
        let source = std::fs::read_to_string(path)
            .map_err(|source| FixtureError::Io { path: path.display().to_string(), source })?;
        Self::parse(&source, spots)
    }

    pub fn courses(&self) -> &[ModelCourse] {
        &self.courses
    }

    pub fn len(&self) -> usize {
        self.courses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.courses.is_empty()
    }

    pub fn get(&self, course_id: &str) -> Option<&ModelCourse> {
        self.by_id.get(course_id).map(|&i| &self.courses[i])
    }

    pub fn digest(&self) -> Vec<String> {
        self.courses.iter().map(ModelCourse::digest_line).collect()
    }

    /// Courses whose title occurs in `text`, first occurrence first.
    pub fn titles_in(&self, text: &str) -> Vec<&ModelCourse> {
        self.titles.find_distinct(text).into_iter().map(|i| &self.courses[i]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdParseError {
    #[error("expected 2 course ids, found {0}")]
    WrongCount(usize),
    #[error("unknown course id {0:?}")]
    UnknownId(String),
    #[error("course id {0:?} given twice")]
    Duplicate(String),
}

/// The text after the last line carrying `tag`, or the last non-empty line
/// when no line carries it.
fn answer_line<'a>(output: &'a str, tag: &str) -> &'a str {
    let mut lines = output.lines().map(str::trim);
    if let Some(tagged) = lines.clone().rev().find_map(|l| l.strip_prefix(tag)) {
        return tagged;
    }
    lines.rfind(|l| !l.is_empty()).unwrap_or("")
}

fn is_list_separator(c: char) -> bool {
    matches!(c, ',' | '、' | '，' | '/' | '／' | '\n')
}

/// Reads exactly two known, distinct course ids, in ranked order.
pub fn parse_two_ids(backend_output: &str, catalog: &CourseCatalog) -> Result<(String, String), IdParseError> {
    let ids: Vec<&str> = answer_line(backend_output, COURSES_TAG)
        .split(|c: char| is_list_separator(c) || c.is_whitespace())
        .map(|t| t.trim_matches(|c: char| matches!(c, '"' | '\'' | '「' | '」' | '[' | ']' | '。' | '.')))
        .filter(|t| !t.is_empty())
        .collect();
    if ids.len() != 2 {
        return Err(IdParseError::WrongCount(ids.len()));
    }
    if let Some(unknown) = ids.iter().find(|id| catalog.get(id).is_none()) {
        return Err(IdParseError::UnknownId(unknown.to_string()));
    }
    if ids[0] == ids[1] {
        return Err(IdParseError::Duplicate(ids[0].to_owned()));
    }
    Ok((ids[0].to_owned(), ids[1].to_owned()))
}

/// Fallback score: how many of the course's keywords occur in `customer`.
pub fn keyword_score(course: &ModelCourse, customer: &str) -> usize {
    let haystack = customer.to_ascii_lowercase();
    course.keywords().iter().filter(|k| haystack.contains(k.as_str())).count()
}

/// Catalog indices ranked by keyword score, ties in catalog order.
pub fn fallback_ranking(customer: &str, catalog: &CourseCatalog) -> Vec<usize> {
    let scores: Vec<usize> = catalog.courses().iter().map(|c| keyword_score(c, customer)).collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].cmp(&scores[a]).then(a.cmp(&b)));
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionSource {
    Backend,
    StrictRetry,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CourseSelection {
    pub course_ids: [String; 2],
    pub source: SelectionSource,
}

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("catalog has {0} courses, at least 2 required")]
    CatalogTooSmall(usize),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// Picks two courses for the customer.
///
/// Asks the backend first, retries once with a stricter note, then falls
/// back to keyword scoring over the customer's turns. Backend outages also
/// fall through to the scorer.
pub fn select_top2(
    backend: &BackendHandle,
    prompts: &PromptLibrary,
    history: &[DialogueTurn],
    catalog: &CourseCatalog,
    tape: &mut Vec<CallOutcome>,
) -> Result<CourseSelection, SelectionError> {
    if catalog.len() < 2 {
        return Err(SelectionError::CatalogTooSmall(catalog.len()));
    }
    let digest = catalog.digest();
    for (strict, source) in [(false, SelectionSource::Backend), (true, SelectionSource::StrictRetry)] {
        let prompt = prompts.build_course_selection_prompt(history, &digest, strict)?;
        match backend.complete(&prompt, tape) {
            Ok(output) => match parse_two_ids(&output, catalog) {
                Ok((a, b)) => return Ok(CourseSelection { course_ids: [a, b], source }),
                Err(e) => tracing::info!(error = %e, strict, "course selection reply rejected"),
            },
            Err(e) => {
                tracing::warn!(error = %e, "course selection backend failed, using keyword scorer");
                break;
            }
        }
    }
    let ranking = fallback_ranking(&customer_text(history), catalog);
    let id = |i: usize| catalog.courses()[ranking[i]].course_id.clone();
    Ok(CourseSelection { course_ids: [id(0), id(1)], source: SelectionSource::Fallback })
}

const OPENING_BRACKETS: [(char, char); 6] =
    [('(', ')'), ('（', '）'), ('《', '》'), ('[', ']'), ('【', '】'), ('〔', '〕')];

/// Strips the decorations backends put around spot names: surrounding
/// whitespace, list bullets, quotes, bracketed readings and trailing full
/// stops. A name wholly inside brackets keeps its content.
pub fn normalize_spot_name(raw: &str) -> String {
    let stripped = strip_decorations(&drop_bracketed(raw));
    if !stripped.is_empty() {
        return stripped;
    }
    let unwrapped: String =
        raw.chars().filter(|c| !OPENING_BRACKETS.iter().any(|(open, close)| c == open || c == close)).collect();
    strip_decorations(&unwrapped)
}

fn drop_bracketed(raw: &str) -> String {
    let mut out = String::new();
    let mut closing: Vec<char> = Vec::new();
    for c in raw.chars() {
        if let Some(&(_, close)) = OPENING_BRACKETS.iter().find(|(open, _)| *open == c) {
            closing.push(close);
        } else if closing.last() == Some(&c) {
            closing.pop();
        } else if closing.is_empty() && !matches!(c, '「' | '」' | '『' | '』' | '"' | '“' | '”') {
            out.push(c);
        }
    }
    out
}

fn strip_decorations(name: &str) -> String {
    let trimmed = name.trim().trim_start_matches(|c: char| matches!(c, '・' | '•' | '-' | '*' | '＊') || c.is_whitespace());
    let trimmed = match trimmed.split_once(['.', '．', ')']) {
        Some((n, rest)) if !n.is_empty() && n.chars().all(|c| c.is_ascii_digit()) => rest,
        _ => trimmed,
    };
    trimmed.trim().trim_end_matches(['。', '.']).trim().to_owned()
}

/// Raw names from an extraction reply, decorations removed.
pub fn parse_spot_names(backend_output: &str) -> Vec<String> {
    let has_tag = backend_output.lines().any(|l| l.trim().starts_with(SPOTS_TAG));
    let body = if has_tag {
        answer_line(backend_output, SPOTS_TAG).to_owned()
    } else {
        backend_output.to_owned()
    };
    body.split(is_list_separator).map(normalize_spot_name).filter(|n| !n.is_empty()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpotDecision {
    /// Canonical names.
    pub spots: [String; 2],
    pub source_turn_index: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpotParseError {
    #[error("expected 2 spots, found {0}")]
    WrongCount(usize),
    #[error("unknown spot {0:?}")]
    Unknown(String),
    #[error("spot {0:?} given twice")]
    Duplicate(String),
}

/// Resolves an extraction reply to two distinct canonical spot names.
pub fn resolve_two_spots(backend_output: &str, spots: &SpotDirectory) -> Result<[String; 2], SpotParseError> {
    let names = parse_spot_names(backend_output);
    if names.len() != 2 {
        return Err(SpotParseError::WrongCount(names.len()));
    }
    let mut canonical = Vec::with_capacity(2);
    for name in &names {
        let spot = spots.get_spot(name).map_err(|_| SpotParseError::Unknown(name.clone()))?;
        canonical.push(spot.name.clone());
    }
    if name_key(&canonical[0]) == name_key(&canonical[1]) {
        return Err(SpotParseError::Duplicate(canonical[0].clone()));
    }
    let [a, b]: [String; 2] = canonical.try_into().expect("two names");
    Ok([a, b])
}

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("spot extraction failed twice: {first}; then {second}")]
    Failed { first: SpotParseError, second: SpotParseError },
    #[error(transparent)]
    Backend(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// Asks the backend which two spots the customer decided on, retrying once
/// with a stricter instruction.
pub fn extract_spots(
    backend: &BackendHandle,
    prompts: &PromptLibrary,
    history: &[DialogueTurn],
    candidates: &[&str],
    spots: &SpotDirectory,
    source_turn_index: u64,
    tape: &mut Vec<CallOutcome>,
) -> Result<SpotDecision, ExtractionError> {
    let mut first_error = None;
    for strict in [false, true] {
        let prompt = prompts.build_spot_extraction_prompt(history, candidates, strict)?;
        let output = backend.complete(&prompt, tape)?;
        match resolve_two_spots(&output, spots) {
            Ok(names) => return Ok(SpotDecision { spots: names, source_turn_index }),
            Err(e) => {
                tracing::info!(error = %e, strict, "spot extraction reply rejected");
                match first_error.take() {
                    None => first_error = Some(e),
                    Some(first) => return Err(ExtractionError::Failed { first, second: e }),
                }
            }
        }
    }
    unreachable!("second attempt always returns")
}
