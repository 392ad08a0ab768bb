//! Spot facts, transit routes, route narratives and visit schedules.
//!
//! Providers are fixture-backed by default. A remote route adapter maps a
//! JSON route-search response onto the same leg type; when it cannot be
//! reached the hub falls back to a walking estimate flagged as approximate.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{name_key, NameMatcher};

const BUILTIN_SPOTS: &str = include_str!("../data/spots.toml");
const BUILTIN_ROUTES: &str = include_str!("../data/routes.toml");
const BUILTIN_ROUTE_TEMPLATES: &str = include_str!("../data/route_templates.toml");

/// Average walking speed for approximate routes, metres per minute.
const WALK_METRES_PER_MINUTE: f64 = 80.0;
/// Street distance over straight-line distance.
const DETOUR_FACTOR: f64 = 1.3;

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing {what}: {source}")]
    Parse { what: String, source: toml::de::Error },
    #[error("invalid fixture: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KnowledgeError {
    #[error("unknown spot {0:?}")]
    UnknownSpot(String),
    #[error("no route from {from} to {to}")]
    NoRoute { from: String, to: String },
}

fn read_file(path: &Path) -> Result<String, FixtureError> {
    std::fs::read_to_string(path).map_err(|source| FixtureError::Io { path: path.display().to_string(), source })
}

/// Admission fee in yen, or a note when it is not a single amount.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Fee {
    Yen(u32),
    Note(String),
}

impl fmt::Display for Fee {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fee::Yen(yen) => write!(f, "{yen}円"),
            Fee::Note(note) => f.write_str(note),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapPoint {
    pub lat: f64,
    pub lon: f64,
}

impl MapPoint {
    pub fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }

    /// Great-circle distance in metres.
    pub fn distance_m(&self, other: &MapPoint) -> f64 {
        const EARTH_RADIUS_M: f64 = 6_371_000.0;
        let (lat1, lat2) = (self.lat.to_radians(), other.lat.to_radians());
        let dlat = lat2 - lat1;
        let dlon = (other.lon - self.lon).to_radians();
        let a = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
        2.0 * EARTH_RADIUS_M * a.sqrt().asin()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotInfo {
    pub name: String,
    pub furigana: String,
    #[serde(rename = "image")]
    pub image_ref: String,
    #[serde(flatten)]
    pub map_point: MapPoint,
    pub open_hours: String,
    pub fee: Fee,
    pub stay_minutes: u32,
    pub blurb: String,
    #[serde(default)]
    pub aliases: Vec<String>,
}

impl SpotInfo {
    /// One line of facts for prompt injection.
    pub fn facts_line(&self) -> String {
        format!(
            "{}（{}）: {} 営業時間 {}。料金 {}。所要時間の目安 {}分。",
            self.name, self.furigana, self.blurb, self.open_hours, self.fee, self.stay_minutes
        )
    }

    fn validate(&self) -> Result<(), String> {
        if self.name.trim().is_empty() {
            return Err("spot with empty name".into());
        }
        if self.furigana.trim().is_empty() {
            return Err(format!("{}: empty furigana", self.name));
        }
        if !self.map_point.is_valid() {
            return Err(format!("{}: map point out of range", self.name));
        }
        if self.stay_minutes == 0 {
            return Err(format!("{}: stay_minutes must be positive", self.name));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct SpotFile {
    spot: Vec<SpotInfo>,
}

/// Spot facts indexed by canonical name and alias.
#[derive(Debug, Clone)]
pub struct SpotDirectory {
    spots: Vec<SpotInfo>,
    by_key: HashMap<String, usize>,
    matcher: NameMatcher,
}

impl SpotDirectory {
    pub fn new(spots: Vec<SpotInfo>) -> Result<Self, FixtureError> {
        let mut by_key = HashMap::new();
        for (i, spot) in spots.iter().enumerate() {
            spot.validate().map_err(FixtureError::Invalid)?;
            for key in std::iter::once(&spot.name).chain(&spot.aliases) {
                if let Some(prev) = by_key.insert(name_key(key), i) {
                    if prev != i {
                        return Err(FixtureError::Invalid(format!("name or alias {key:?} used by two spots")));
                    }
                }
            }
        }
        let matcher = NameMatcher::new(
            spots.iter().enumerate().flat_map(|(i, s)| std::iter::once(s.name.as_str()).chain(s.aliases.iter().map(String::as_str)).map(move |n| (n, i))),
        );
        Ok(Self { spots, by_key, matcher })
    }

    pub fn parse(source: &str) -> Result<Self, FixtureError> {
        let file: SpotFile =
            toml::from_str(source).map_err(|source| FixtureError::Parse { what: "spot fixture".into(), source })?;
        Self::new(file.spot)
    }

    pub fn builtin() -> Self {
        Self::parse(BUILTIN_SPOTS).expect("builtin spot fixture is valid")
    }

    pub fn load(path: &Path) -> Result<Self, FixtureError> {
        Self::parse(&read_file(path)?)
    }

    /// Resolves a canonical name or alias.
    pub fn get_spot(&self, name_or_alias: &str) -> Result<&SpotInfo, KnowledgeError> {
        self.by_key
            .get(&name_key(name_or_alias))
            .map(|&i| &self.spots[i])
            .ok_or_else(|| KnowledgeError::UnknownSpot(name_or_alias.to_owned()))
    }

    pub fn contains(&self, name_or_alias: &str) -> bool {
        self.by_key.contains_key(&name_key(name_or_alias))
    }

    pub fn spots(&self) -> &[SpotInfo] {
        &self.spots
    }

    /// Spots named in `text`, first occurrence first, longest match wins.
    pub fn mentioned_in(&self, text: &str) -> Vec<&SpotInfo> {
        self.matcher.find_distinct(text).into_iter().map(|i| &self.spots[i]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitMode {
    Walk,
    Bus,
    Train,
    Taxi,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteLeg {
    pub from: String,
    pub to: String,
    pub mode: TransitMode,
    pub minutes: u32,
    #[serde(default, rename = "line", skip_serializing_if = "Option::is_none")]
    pub line_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fare: Option<u32>,
}

impl RouteLeg {
    fn reversed(&self) -> Self {
        Self { from: self.to.clone(), to: self.from.clone(), ..self.clone() }
    }
}

fn check_legs(from: &str, to: &str, legs: &[RouteLeg]) -> Result<(), String> {
    if legs.is_empty() {
        return if from == to { Ok(()) } else { Err(format!("{from} -> {to}: no legs")) };
    }
    if legs[0].from != from {
        return Err(format!("{from} -> {to}: first leg starts at {}", legs[0].from));
    }
    if legs[legs.len() - 1].to != to {
        return Err(format!("{from} -> {to}: last leg ends at {}", legs[legs.len() - 1].to));
    }
    for pair in legs.windows(2) {
        if pair[0].to != pair[1].from {
            return Err(format!("{from} -> {to}: leg ending at {} is followed by one starting at {}", pair[0].to, pair[1].from));
        }
    }
    if let Some(leg) = legs.iter().find(|l| l.minutes == 0) {
        return Err(format!("{from} -> {to}: leg {} -> {} has zero minutes", leg.from, leg.to));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutePlan {
    pub from: String,
    pub to: String,
    pub legs: Vec<RouteLeg>,
    pub total_minutes: u32,
    pub narrative: String,
    /// Set when the plan is a straight-line walking estimate.
    #[serde(default)]
    pub approximate: bool,
}

impl RoutePlan {
    /// Builds a plan from chained legs and renders its narrative.
    pub fn new(
        from: &str,
        to: &str,
        legs: Vec<RouteLeg>,
        approximate: bool,
        templates: &RouteTemplates,
    ) -> Result<Self, String> {
        check_legs(from, to, &legs)?;
        let total_minutes = legs.iter().map(|l| l.minutes).sum();
        let mut plan = Self { from: from.to_owned(), to: to.to_owned(), legs, total_minutes, narrative: String::new(), approximate };
        plan.narrative = templates.render(&plan);
        Ok(plan)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RouteError {
    #[error("no route")]
    NoRoute,
    #[error("route provider unavailable: {0}")]
    Unavailable(String),
}

/// A source of transit legs between two spots.
pub trait RouteProvider: Send + Sync {
    fn legs(&self, from: &SpotInfo, to: &SpotInfo) -> Result<Vec<RouteLeg>, RouteError>;
}

#[derive(Deserialize)]
struct RouteFile {
    route: Vec<RouteRecord>,
}

#[derive(Deserialize)]
struct RouteRecord {
    from: String,
    to: String,
    legs: Vec<RouteLeg>,
}

/// Canned routes keyed by (from, to); reverse lookups reverse the legs.
#[derive(Debug, Clone, Default)]
pub struct FixtureRoutes {
    routes: HashMap<(String, String), Vec<RouteLeg>>,
}

impl FixtureRoutes {
    pub fn parse(source: &str) -> Result<Self, FixtureError> {
        let file: RouteFile =
            toml::from_str(source).map_err(|source| FixtureError::Parse { what: "route fixture".into(), source })?;
        let mut routes = HashMap::new();
        for record in file.route {
            check_legs(&record.from, &record.to, &record.legs).map_err(FixtureError::Invalid)?;
            if record.from == record.to {
                return Err(FixtureError::Invalid(format!("route from {} to itself", record.from)));
            }
            routes.insert((record.from, record.to), record.legs);
        }
        Ok(Self { routes })
    }

    pub fn builtin() -> Self {
        Self::parse(BUILTIN_ROUTES).expect("builtin route fixture is valid")
    }

    pub fn load(path: &Path) -> Result<Self, FixtureError> {
        Self::parse(&read_file(path)?)
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.routes.keys().map(|(a, b)| (a.as_str(), b.as_str()))
    }
}

impl RouteProvider for FixtureRoutes {
    fn legs(&self, from: &SpotInfo, to: &SpotInfo) -> Result<Vec<RouteLeg>, RouteError> {
        if let Some(legs) = self.routes.get(&(from.name.clone(), to.name.clone())) {
            return Ok(legs.clone());
        }
        if let Some(legs) = self.routes.get(&(to.name.clone(), from.name.clone())) {
            return Ok(legs.iter().rev().map(RouteLeg::reversed).collect());
        }
        Err(RouteError::NoRoute)
    }
}

/// Route-search adapter for an HTTP endpoint.
///
/// Sends `GET {endpoint}?start=<lat>,<lon>&goal=<lat>,<lon>` and expects
/// `{"sections": [{"from", "to", "mode", "minutes", "line"?, "fare"?}]}`.
/// Section endpoints are rewritten so the first and last legs carry the
/// spot names.
pub struct HttpRouteProvider {
    endpoint: String,
    api_key: Option<String>,
    timeout: Duration,
    client: OnceLock<reqwest::blocking::Client>,
}

impl HttpRouteProvider {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        Self { endpoint: endpoint.into(), api_key, timeout, client: OnceLock::new() }
    }
}

#[derive(Deserialize)]
struct RouteResponse {
    sections: Vec<RouteLeg>,
}

impl RouteProvider for HttpRouteProvider {
    fn legs(&self, from: &SpotInfo, to: &SpotInfo) -> Result<Vec<RouteLeg>, RouteError> {
        let unavailable = |e: reqwest::Error| RouteError::Unavailable(e.to_string());
        let client = match self.client.get() {
            Some(c) => c,
            None => {
                let built = reqwest::blocking::Client::builder().timeout(self.timeout).build().map_err(unavailable)?;
                self.client.get_or_init(|| built)
            }
        };
        let url = format!(
            "{}?start={},{}&goal={},{}",
            self.endpoint, from.map_point.lat, from.map_point.lon, to.map_point.lat, to.map_point.lon
        );
        let mut request = client.get(url);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(unavailable)?;
        match response.status().as_u16() {
            404 => return Err(RouteError::NoRoute),
            s if !(200..300).contains(&s) => return Err(RouteError::Unavailable(format!("HTTP {s}"))),
            _ => {}
        }
        let body: RouteResponse = response.json().map_err(unavailable)?;
        let mut legs = body.sections;
        if legs.is_empty() {
            return Err(RouteError::NoRoute);
        }
        legs[0].from = from.name.clone();
        let last = legs.len() - 1;
        legs[last].to = to.name.clone();
        Ok(legs)
    }
}

/// Sentence templates for route narratives.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct RouteTemplates {
    pub identity: String,
    pub header: String,
    pub leg: String,
    pub line_clause: String,
    pub fare_clause: String,
    pub approximate: String,
    pub modes: BTreeMap<TransitMode, String>,
}

fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = template.to_owned();
    for (name, value) in slots {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}

impl RouteTemplates {
    pub fn parse(source: &str) -> Result<Self, FixtureError> {
        let templates: Self =
            toml::from_str(source).map_err(|source| FixtureError::Parse { what: "route templates".into(), source })?;
        for mode in [TransitMode::Walk, TransitMode::Bus, TransitMode::Train, TransitMode::Taxi] {
            if !templates.modes.contains_key(&mode) {
                return Err(FixtureError::Invalid(format!("route templates lack a word for {mode:?}")));
            }
        }
        Ok(templates)
    }

    pub fn builtin() -> Self {
        Self::parse(BUILTIN_ROUTE_TEMPLATES).expect("builtin route templates are valid")
    }

    pub fn load(path: &Path) -> Result<Self, FixtureError> {
        Self::parse(&read_file(path)?)
    }

    /// Fills the templates for `plan`: a header, then one sentence per leg in
    /// order, each naming the mode and minutes.
    pub fn render(&self, plan: &RoutePlan) -> String {
        if plan.legs.is_empty() {
            return self.identity.clone();
        }
        let total = plan.total_minutes.to_string();
        let mut lines = vec![fill(&self.header, &[("from", &plan.from), ("to", &plan.to), ("total", &total)])];
        for (i, leg) in plan.legs.iter().enumerate() {
            let n = (i + 1).to_string();
            let minutes = leg.minutes.to_string();
            let line = leg.line_name.as_deref().map(|l| fill(&self.line_clause, &[("line", l)])).unwrap_or_default();
            let fare = leg.fare.map(|f| fill(&self.fare_clause, &[("fare", &f.to_string())])).unwrap_or_default();
            lines.push(fill(&self.leg, &[
                ("n", &n),
                ("from", &leg.from),
                ("to", &leg.to),
                ("mode", &self.modes[&leg.mode]),
                ("line", &line),
                ("minutes", &minutes),
                ("fare", &fare),
            ]));
        }
        if plan.approximate {
            lines.push(self.approximate.clone());
        }
        lines.join("\n")
    }
}

/// Spot facts plus a route provider and narrative templates.
#[derive(Clone)]
pub struct KnowledgeHub {
    pub spots: SpotDirectory,
    routes: Arc<dyn RouteProvider>,
    pub templates: RouteTemplates,
}

impl fmt::Debug for KnowledgeHub {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KnowledgeHub").field("spots", &self.spots.spots().len()).finish_non_exhaustive()
    }
}

impl KnowledgeHub {
    pub fn new(spots: SpotDirectory, routes: Arc<dyn RouteProvider>, templates: RouteTemplates) -> Self {
        Self { spots, routes, templates }
    }

    pub fn builtin() -> Self {
        Self::new(SpotDirectory::builtin(), Arc::new(FixtureRoutes::builtin()), RouteTemplates::builtin())
    }

    pub fn get_spot(&self, name_or_alias: &str) -> Result<&SpotInfo, KnowledgeError> {
        self.spots.get_spot(name_or_alias)
    }

    /// Looks up the route between two spots.
    ///
    /// The same spot gives an empty plan. A provider outage gives a walking
    /// estimate with `approximate` set.
    pub fn find_route(&self, from: &SpotInfo, to: &SpotInfo) -> Result<RoutePlan, KnowledgeError> {
        if from.name == to.name {
            return Ok(RoutePlan::new(&from.name, &to.name, Vec::new(), false, &self.templates).expect("empty plan"));
        }
        match self.routes.legs(from, to) {
            Ok(legs) => RoutePlan::new(&from.name, &to.name, legs, false, &self.templates).map_err(|reason| {
                tracing::warn!(%reason, "provider returned broken legs");
                KnowledgeError::NoRoute { from: from.name.clone(), to: to.name.clone() }
            }),
            Err(RouteError::NoRoute) => Err(KnowledgeError::NoRoute { from: from.name.clone(), to: to.name.clone() }),
            Err(RouteError::Unavailable(reason)) => {
                tracing::warn!(%reason, "route provider unavailable, using walking estimate");
                Ok(self.approximate_route(from, to))
            }
        }
    }

    /// A single walking leg sized from the straight-line distance.
    pub fn approximate_route(&self, from: &SpotInfo, to: &SpotInfo) -> RoutePlan {
        let metres = from.map_point.distance_m(&to.map_point) * DETOUR_FACTOR;
        let minutes = ((metres / WALK_METRES_PER_MINUTE).ceil() as u32).max(1);
        let leg = RouteLeg { from: from.name.clone(), to: to.name.clone(), mode: TransitMode::Walk, minutes, line_name: None, fare: None };
        RoutePlan::new(&from.name, &to.name, vec![leg], true, &self.templates).expect("single leg chains")
    }

    pub fn render_route_nl(&self, plan: &RoutePlan) -> String {
        self.templates.render(plan)
    }
}

/// Minutes since midnight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClockTime(u32);

pub const MINUTES_PER_DAY: u32 = 24 * 60;

impl ClockTime {
    pub fn new(hour: u32, minute: u32) -> Option<Self> {
        (hour < 24 && minute < 60).then_some(Self(hour * 60 + minute))
    }

    pub fn from_minutes(minutes: u32) -> Self {
        Self(minutes)
    }

    pub fn minutes(self) -> u32 {
        self.0
    }

    pub fn plus(self, minutes: u32) -> Self {
        Self(self.0 + minutes)
    }
}

impl fmt::Display for ClockTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}:{:02}", self.0 / 60, self.0 % 60)
    }
}

impl FromStr for ClockTime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (h, m) = s.trim().split_once(':').ok_or_else(|| format!("expected HH:MM, got {s:?}"))?;
        let hour = h.parse().map_err(|_| format!("bad hour in {s:?}"))?;
        let minute: u32 = m.parse().map_err(|_| format!("bad minute in {s:?}"))?;
        if m.len() != 2 {
            return Err(format!("expected two-digit minutes in {s:?}"));
        }
        // 24:00 is allowed as an end-of-day cutoff.
        if hour == 24 && minute == 0 {
            return Ok(Self(MINUTES_PER_DAY));
        }
        Self::new(hour, minute).ok_or_else(|| format!("time out of range: {s:?}"))
    }
}

impl Serialize for ClockTime {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ClockTime {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activity {
    Visit { spot: String, minutes: u32 },
    Transit { from: String, to: String, minutes: u32 },
    End,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub time: ClockTime,
    pub activity: Activity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub entries: Vec<ScheduleEntry>,
}

impl Schedule {
    pub fn start(&self) -> ClockTime {
        self.entries.first().expect("schedule is never empty").time
    }

    pub fn end(&self) -> ClockTime {
        self.entries.last().expect("schedule is never empty").time
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.entries.windows(2).all(|w| w[0].time < w[1].time)
    }

    /// Prompt text, one line per entry.
    pub fn describe(&self) -> String {
        self.entries
            .iter()
            .map(|e| match &e.activity {
                Activity::Visit { spot, minutes } => format!("{} {spot}を見学（{minutes}分）", e.time),
                Activity::Transit { to, minutes, .. } => format!("{} {to}へ移動（{minutes}分）", e.time),
                Activity::End => format!("{} 終了", e.time),
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScheduleError {
    #[error("both visits are to {0}")]
    SameSpot(String),
    #[error("route between the spots takes no time")]
    EmptyRoute,
    #[error("start time {0} is outside the day")]
    StartOutsideDay(ClockTime),
    #[error("schedule ends at {end}, after the {cutoff} cutoff")]
    DayOverflow { end: ClockTime, cutoff: ClockTime },
}

/// Lays out: visit the first spot, travel, visit the second, end.
pub fn build_schedule(
    spots: [&SpotInfo; 2],
    route_between: &RoutePlan,
    start_time: ClockTime,
    cutoff: ClockTime,
) -> Result<Schedule, ScheduleError> {
    let [first, second] = spots;
    if first.name == second.name {
        return Err(ScheduleError::SameSpot(first.name.clone()));
    }
    if route_between.total_minutes == 0 {
        return Err(ScheduleError::EmptyRoute);
    }
    if start_time.minutes() >= MINUTES_PER_DAY || start_time >= cutoff {
        return Err(ScheduleError::StartOutsideDay(start_time));
    }
    let mut entries = Vec::with_capacity(4);
    let mut clock = start_time;
    entries.push(ScheduleEntry { time: clock, activity: Activity::Visit { spot: first.name.clone(), minutes: first.stay_minutes } });
    clock = clock.plus(first.stay_minutes);
    entries.push(ScheduleEntry {
        time: clock,
        activity: Activity::Transit { from: first.name.clone(), to: second.name.clone(), minutes: route_between.total_minutes },
    });
    clock = clock.plus(route_between.total_minutes);
    entries.push(ScheduleEntry { time: clock, activity: Activity::Visit { spot: second.name.clone(), minutes: second.stay_minutes } });
    clock = clock.plus(second.stay_minutes);
    entries.push(ScheduleEntry { time: clock, activity: Activity::End });
    if clock > cutoff {
        return Err(ScheduleError::DayOverflow { end: clock, cutoff });
    }
    Ok(Schedule { entries })
}
