//! Text grammar for the two files exchanged with the robot.
//!
//! `MissionMessage.txt` flows from the crowdsourcing system to the robot and
//! lists what must be checked; `Update.txt` flows back with one result per
//! event and a full refresh of the obstacles seen along the patrol. Both are
//! one record per line, comma separated:
//!
//! ```text
//! #Event, 1, elevator_repair, elevator_1
//! #Obstacle, 1, chair, 3, corridor_5
//! ```
//!
//! and in an update the event line carries the 0/1 result instead:
//!
//! ```text
//! #Event, 1, 1
//! #Obstacle, 1, warning_signal, 1, elevator_1
//! ```
//!
//! Parsing is lenient (CRLF, blank lines, stray spaces around commas, free
//! text tokens such as `Trash Can`); serializing always produces the
//! canonical form (LF, `", "`, snake_case tokens, events first).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

/// File name of the mission payload on the sync channel.
pub const MISSION_FILE: &str = "MissionMessage.txt";
/// File name of the update payload on the sync channel.
pub const UPDATE_FILE: &str = "Update.txt";

const EVENT_PREFIX: &str = "#Event";
const OBSTACLE_PREFIX: &str = "#Obstacle";

/// The closed set of recognizable object classes, in canonical order.
///
/// The derived `Ord` follows declaration order, which is the order used
/// whenever obstacle summaries must be deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleClass {
    Table,
    Sofa,
    Chair,
    TelephoneBooth,
    TrashCan,
    HandWasherRod,
    WarningSignal,
    Shelf,
    ChairWithDesk,
    People,
    Door,
}

impl ObstacleClass {
    pub const COUNT: usize = 11;

    pub const ALL: [ObstacleClass; Self::COUNT] = [
        ObstacleClass::Table,
        ObstacleClass::Sofa,
        ObstacleClass::Chair,
        ObstacleClass::TelephoneBooth,
        ObstacleClass::TrashCan,
        ObstacleClass::HandWasherRod,
        ObstacleClass::WarningSignal,
        ObstacleClass::Shelf,
        ObstacleClass::ChairWithDesk,
        ObstacleClass::People,
        ObstacleClass::Door,
    ];

    pub fn token(self) -> &'static str {
        match self {
            ObstacleClass::Table => "table",
            ObstacleClass::Sofa => "sofa",
            ObstacleClass::Chair => "chair",
            ObstacleClass::TelephoneBooth => "telephone_booth",
            ObstacleClass::TrashCan => "trash_can",
            ObstacleClass::HandWasherRod => "hand_washer_rod",
            ObstacleClass::WarningSignal => "warning_signal",
            ObstacleClass::Shelf => "shelf",
            ObstacleClass::ChairWithDesk => "chair_with_desk",
            ObstacleClass::People => "people",
            ObstacleClass::Door => "door",
        }
    }

    /// Position in the canonical listing, `0..11`.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_token(token: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|c| c.token() == token)
    }
}

impl fmt::Display for ObstacleClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for ObstacleClass {
    type Err = TokenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let token = normalize_token(s)?;
        Self::from_token(&token).ok_or(TokenError::InvalidCharacters(token))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TokenError {
    #[error("empty token")]
    EmptyToken,
    #[error("invalid characters in token `{0}`")]
    InvalidCharacters(String),
}

/// Canonicalize free text into an identifier token.
///
/// Lowercases, strips surrounding whitespace and turns each internal
/// whitespace run into a single `_`. The result must match
/// `[a-z][a-z0-9_]*`.
pub fn normalize_token(raw: &str) -> Result<String, TokenError> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(TokenError::EmptyToken);
    }
    let mut out = String::with_capacity(trimmed.len());
    let mut in_space = false;
    for c in trimmed.chars() {
        if c.is_whitespace() {
            in_space = true;
            continue;
        }
        if in_space {
            out.push('_');
            in_space = false;
        }
        out.extend(c.to_lowercase());
    }
    if is_identifier(&out) {
        Ok(out)
    } else {
        Err(TokenError::InvalidCharacters(out))
    }
}

fn is_identifier(s: &str) -> bool {
    let mut bytes = s.bytes();
    matches!(bytes.next(), Some(b'a'..=b'z'))
        && bytes.all(|b| matches!(b, b'a'..=b'z' | b'0'..=b'9' | b'_'))
}

/// A named region of the indoor map, rendered `kind_index` (e.g. `corridor_5`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SemanticLocation {
    kind: String,
    index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("`{0}` is not a semantic location (expected kind_index, e.g. corridor_5)")]
pub struct BadLocation(pub String);

impl SemanticLocation {
    pub fn new(kind: &str, index: u32) -> Result<Self, BadLocation> {
        if index == 0 || kind.is_empty() || !kind.bytes().all(|b| b.is_ascii_lowercase()) {
            return Err(BadLocation(format!("{kind}_{index}")));
        }
        Ok(Self {
            kind: kind.to_string(),
            index,
        })
    }

    /// Strict parse of the canonical rendering; no normalization.
    pub fn parse(s: &str) -> Result<Self, BadLocation> {
        let bad = || BadLocation(s.to_string());
        let (kind, index) = s.rsplit_once('_').ok_or_else(bad)?;
        let digits_ok = index.bytes().all(|b| b.is_ascii_digit())
            && matches!(index.as_bytes().first(), Some(b'1'..=b'9'));
        if !digits_ok {
            return Err(bad());
        }
        let index = index.parse::<u32>().map_err(|_| bad())?;
        Self::new(kind, index).map_err(|_| bad())
    }

    /// Parse after [`normalize_token`], so `Corridor 5` is accepted.
    pub fn parse_lenient(raw: &str) -> Result<Self, BadLocation> {
        let token = normalize_token(raw).map_err(|_| BadLocation(raw.trim().to_string()))?;
        Self::parse(&token)
    }

    pub fn kind(&self) -> &str {
        &self.kind
    }

    pub fn index(&self) -> u32 {
        self.index
    }
}

impl fmt::Display for SemanticLocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.kind, self.index)
    }
}

impl FromStr for SemanticLocation {
    type Err = BadLocation;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl TryFrom<String> for SemanticLocation {
    type Error = BadLocation;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::parse(&value)
    }
}

impl From<SemanticLocation> for String {
    fn from(value: SemanticLocation) -> Self {
        value.to_string()
    }
}

/// An event keyword token such as `class_waiting`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EventKeyword(String);

impl EventKeyword {
    pub const CLASS_WAITING: &'static str = "class_waiting";
    pub const ELEVATOR_REPAIR: &'static str = "elevator_repair";

    pub fn new(token: &str) -> Result<Self, TokenError> {
        if token.is_empty() {
            return Err(TokenError::EmptyToken);
        }
        if !is_identifier(token) {
            return Err(TokenError::InvalidCharacters(token.to_string()));
        }
        Ok(Self(token.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EventKeyword {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for EventKeyword {
    type Error = TokenError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(&value)
    }
}

impl From<EventKeyword> for String {
    fn from(value: EventKeyword) -> Self {
        value.0
    }
}

/// How an event keyword is decided from detections: the event is ongoing
/// when at least `min_count` objects of `class` are seen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRule {
    pub class: ObstacleClass,
    pub min_count: u32,
}

/// Known event keywords and the detection rule behind each.
///
/// Always contains `class_waiting` (more than two people) and
/// `elevator_repair` (a warning sign in front of the elevator).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordRegistry {
    rules: BTreeMap<EventKeyword, EventRule>,
}

impl Default for KeywordRegistry {
    fn default() -> Self {
        let mut rules = BTreeMap::new();
        rules.insert(
            EventKeyword(EventKeyword::CLASS_WAITING.into()),
            EventRule {
                class: ObstacleClass::People,
                min_count: 3,
            },
        );
        rules.insert(
            EventKeyword(EventKeyword::ELEVATOR_REPAIR.into()),
            EventRule {
                class: ObstacleClass::WarningSignal,
                min_count: 1,
            },
        );
        Self { rules }
    }
}

impl KeywordRegistry {
    /// Adds (or replaces) a keyword. The two built-in keywords cannot be
    /// redefined; `false` is returned and the registry is left unchanged.
    pub fn register(&mut self, keyword: EventKeyword, rule: EventRule) -> bool {
        if keyword.as_str() == EventKeyword::CLASS_WAITING
            || keyword.as_str() == EventKeyword::ELEVATOR_REPAIR
        {
            return false;
        }
        self.rules.insert(keyword, rule);
        true
    }

    pub fn rule(&self, keyword: &EventKeyword) -> Option<EventRule> {
        self.rules.get(keyword).copied()
    }

    pub fn contains(&self, keyword: &EventKeyword) -> bool {
        self.rules.contains_key(keyword)
    }

    pub fn keywords(&self) -> impl Iterator<Item = &EventKeyword> {
        self.rules.keys()
    }

    /// Resolve free text to a registered keyword.
    pub fn resolve(&self, raw: &str) -> Option<EventKeyword> {
        let token = normalize_token(raw).ok()?;
        let keyword = EventKeyword::new(&token).ok()?;
        self.contains(&keyword).then_some(keyword)
    }
}

/// `(#Event, number, keyword, location)` in a mission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRequest {
    pub number: u32,
    pub keyword: EventKeyword,
    pub location: SemanticLocation,
}

/// `(#Obstacle, number, class, count, location)`, used in both directions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObstacleEntry {
    pub number: u32,
    pub obstacle_type: ObstacleClass,
    pub count: u32,
    pub location: SemanticLocation,
}

/// `(#Event, number, result)` in an update; `ongoing` renders as 1/0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventResult {
    pub number: u32,
    pub ongoing: bool,
}

/// Invariant violations when building a message in memory.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MessageError {
    #[error("record numbers start at 1")]
    ZeroNumber,
    #[error("obstacle count must be at least 1")]
    ZeroCount,
    #[error("number {0} appears twice")]
    DuplicateNumber(u32),
    #[error("obstacle number {found} out of sequence (expected {expected})")]
    OutOfSequence { expected: u32, found: u32 },
}

fn check_obstacle(entry: &ObstacleEntry) -> Result<(), MessageError> {
    if entry.number == 0 {
        return Err(MessageError::ZeroNumber);
    }
    if entry.count == 0 {
        return Err(MessageError::ZeroCount);
    }
    Ok(())
}

fn check_unique<I: IntoIterator<Item = u32>>(numbers: I) -> Result<(), MessageError> {
    let mut seen = BTreeSet::new();
    for n in numbers {
        if n == 0 {
            return Err(MessageError::ZeroNumber);
        }
        if !seen.insert(n) {
            return Err(MessageError::DuplicateNumber(n));
        }
    }
    Ok(())
}

/// Payload of `MissionMessage.txt`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MissionMessage {
    events: Vec<EventRequest>,
    obstacles: Vec<ObstacleEntry>,
}

impl MissionMessage {
    pub fn new(
        events: Vec<EventRequest>,
        obstacles: Vec<ObstacleEntry>,
    ) -> Result<Self, MessageError> {
        check_unique(events.iter().map(|e| e.number))?;
        obstacles.iter().try_for_each(check_obstacle)?;
        check_unique(obstacles.iter().map(|o| o.number))?;
        Ok(Self { events, obstacles })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[EventRequest] {
        &self.events
    }

    pub fn obstacles(&self) -> &[ObstacleEntry] {
        &self.obstacles
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty() && self.obstacles.is_empty()
    }

    pub fn parse(text: &[u8], registry: &KeywordRegistry) -> Result<Self, ParseError> {
        parse_mission(text, registry)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&format!(
                "{EVENT_PREFIX}, {}, {}, {}\n",
                e.number, e.keyword, e.location
            ));
        }
        for o in &self.obstacles {
            push_obstacle_line(&mut out, o);
        }
        out
    }
}

/// Payload of `Update.txt`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UpdateMessage {
    event_results: Vec<EventResult>,
    obstacles: Vec<ObstacleEntry>,
}

impl UpdateMessage {
    /// Obstacle numbers must already run 1..n in listing order.
    pub fn new(
        event_results: Vec<EventResult>,
        obstacles: Vec<ObstacleEntry>,
    ) -> Result<Self, MessageError> {
        check_unique(event_results.iter().map(|e| e.number))?;
        for (i, o) in obstacles.iter().enumerate() {
            check_obstacle(o)?;
            let expected = i as u32 + 1;
            if o.number != expected {
                return Err(MessageError::OutOfSequence {
                    expected,
                    found: o.number,
                });
            }
        }
        Ok(Self {
            event_results,
            obstacles,
        })
    }

    /// Like [`UpdateMessage::new`] but overwrites obstacle numbers with 1..n.
    pub fn renumbered(
        event_results: Vec<EventResult>,
        mut obstacles: Vec<ObstacleEntry>,
    ) -> Result<Self, MessageError> {
        for (i, o) in obstacles.iter_mut().enumerate() {
            o.number = i as u32 + 1;
        }
        Self::new(event_results, obstacles)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn event_results(&self) -> &[EventResult] {
        &self.event_results
    }

    pub fn obstacles(&self) -> &[ObstacleEntry] {
        &self.obstacles
    }

    pub fn parse(text: &[u8]) -> Result<Self, ParseError> {
        parse_update(text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.event_results {
            out.push_str(&format!(
                "{EVENT_PREFIX}, {}, {}\n",
                e.number,
                u8::from(e.ongoing)
            ));
        }
        for o in &self.obstacles {
            push_obstacle_line(&mut out, o);
        }
        out
    }
}

fn push_obstacle_line(out: &mut String, o: &ObstacleEntry) {
    out.push_str(&format!(
        "{OBSTACLE_PREFIX}, {}, {}, {}, {}\n",
        o.number, o.obstacle_type, o.count, o.location
    ));
}

pub fn serialize_mission(m: &MissionMessage) -> Vec<u8> {
    m.to_text().into_bytes()
}

pub fn serialize_update(u: &UpdateMessage) -> Vec<u8> {
    u.to_text().into_bytes()
}

/// A parse failure, anchored at a 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseErrorKind {
    #[error("malformed line: {0}")]
    MalformedLine(String),
    #[error("unknown event keyword `{0}`")]
    UnknownKeyword(String),
    #[error("unknown obstacle class `{0}`")]
    UnknownObstacleClass(String),
    #[error("{0}")]
    BadLocation(BadLocation),
    #[error("number {0} appears twice")]
    DuplicateNumber(u32),
    #[error("event result `{0}` is not 0 or 1")]
    BadResult(String),
    #[error("obstacle number {found} out of sequence (expected {expected})")]
    OutOfSequence { expected: u32, found: u32 },
}

impl ParseErrorKind {
    /// Stable error name, echoed by the HTTP layer.
    pub fn name(&self) -> &'static str {
        match self {
            ParseErrorKind::MalformedLine(_) => "MalformedLine",
            ParseErrorKind::UnknownKeyword(_) => "UnknownKeyword",
            ParseErrorKind::UnknownObstacleClass(_) => "UnknownObstacleClass",
            ParseErrorKind::BadLocation(_) => "BadLocation",
            ParseErrorKind::DuplicateNumber(_) => "DuplicateNumber",
            ParseErrorKind::BadResult(_) => "BadResult",
            ParseErrorKind::OutOfSequence { .. } => "OutOfSequence",
        }
    }
}

type LineResult<T> = Result<T, ParseErrorKind>;

enum Record<'a> {
    Event(Vec<&'a str>),
    Obstacle(Vec<&'a str>),
}

/// Yields `(line number, fields)` for every non-blank line.
fn records(text: &[u8]) -> impl Iterator<Item = (usize, LineResult<Record<'_>>)> {
    text.split(|b| *b == b'\n')
        .enumerate()
        .filter_map(|(i, raw)| {
            let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
            let line = match core::str::from_utf8(raw) {
                Ok(s) => s,
                Err(_) => {
                    return Some((
                        i + 1,
                        Err(ParseErrorKind::MalformedLine("invalid UTF-8".into())),
                    ))
                }
            };
            if line.trim().is_empty() {
                return None;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let record = match fields[0] {
                EVENT_PREFIX => Ok(Record::Event(fields)),
                OBSTACLE_PREFIX => Ok(Record::Obstacle(fields)),
                other => Err(ParseErrorKind::MalformedLine(format!(
                    "unknown record prefix `{other}`"
                ))),
            };
            Some((i + 1, record))
        })
}

fn expect_fields(fields: &[&str], n: usize) -> LineResult<()> {
    if fields.len() != n {
        return Err(ParseErrorKind::MalformedLine(format!(
            "{} record needs {} fields, found {}",
            fields[0],
            n,
            fields.len()
        )));
    }
    Ok(())
}

fn positive(field: &str, what: &str) -> LineResult<u32> {
    let malformed =
        || ParseErrorKind::MalformedLine(format!("{what} `{field}` is not a positive integer"));
    if field.is_empty() || !field.bytes().all(|b| b.is_ascii_digit()) {
        return Err(malformed());
    }
    match field.parse::<u32>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(malformed()),
    }
}

fn obstacle_fields(fields: &[&str]) -> LineResult<ObstacleEntry> {
    expect_fields(fields, 5)?;
    let number = positive(fields[1], "number")?;
    let obstacle_type = normalize_token(fields[2])
        .ok()
        .and_then(|t| ObstacleClass::from_token(&t))
        .ok_or_else(|| ParseErrorKind::UnknownObstacleClass(fields[2].into()))?;
    let count = positive(fields[3], "count")?;
    let location =
        SemanticLocation::parse_lenient(fields[4]).map_err(ParseErrorKind::BadLocation)?;
    Ok(ObstacleEntry {
        number,
        obstacle_type,
        count,
        location,
    })
}

fn at(line: usize) -> impl Fn(ParseErrorKind) -> ParseError {
    move |kind| ParseError { line, kind }
}

pub fn parse_mission(
    text: &[u8],
    registry: &KeywordRegistry,
) -> Result<MissionMessage, ParseError> {
    let mut message = MissionMessage::default();
    let mut event_numbers = BTreeSet::new();
    let mut obstacle_numbers = BTreeSet::new();
    for (line, record) in records(text) {
        let err = at(line);
        match record.map_err(&err)? {
            Record::Event(fields) => {
                expect_fields(&fields, 4).map_err(&err)?;
                let number = positive(fields[1], "number").map_err(&err)?;
                let keyword = registry
                    .resolve(fields[2])
                    .ok_or_else(|| err(ParseErrorKind::UnknownKeyword(fields[2].into())))?;
                let location = SemanticLocation::parse_lenient(fields[3])
                    .map_err(|e| err(ParseErrorKind::BadLocation(e)))?;
                if !event_numbers.insert(number) {
                    return Err(err(ParseErrorKind::DuplicateNumber(number)));
                }
                message.events.push(EventRequest {
                    number,
                    keyword,
                    location,
                });
            }
            Record::Obstacle(fields) => {
                let entry = obstacle_fields(&fields).map_err(&err)?;
                if !obstacle_numbers.insert(entry.number) {
                    return Err(err(ParseErrorKind::DuplicateNumber(entry.number)));
                }
                message.obstacles.push(entry);
            }
        }
    }
    Ok(message)
}

pub fn parse_update(text: &[u8]) -> Result<UpdateMessage, ParseError> {
    let mut message = UpdateMessage::default();
    let mut event_numbers = BTreeSet::new();
    for (line, record) in records(text) {
        let err = at(line);
        match record.map_err(&err)? {
            Record::Event(fields) => {
                expect_fields(&fields, 3).map_err(&err)?;
                let number = positive(fields[1], "number").map_err(&err)?;
                let raw = fields[2];
                let ongoing = match raw {
                    "0" => false,
                    "1" => true,
                    _ if !raw.is_empty() && raw.bytes().all(|b| b.is_ascii_digit()) => {
                        return Err(err(ParseErrorKind::BadResult(raw.into())))
                    }
                    _ => {
                        return Err(err(ParseErrorKind::MalformedLine(format!(
                            "result `{raw}` is not numeric"
                        ))))
                    }
                };
                if !event_numbers.insert(number) {
                    return Err(err(ParseErrorKind::DuplicateNumber(number)));
                }
                message.event_results.push(EventResult { number, ongoing });
            }
            Record::Obstacle(fields) => {
                let entry = obstacle_fields(&fields).map_err(&err)?;
                let expected = message.obstacles.len() as u32 + 1;
                if entry.number != expected {
                    let kind = if entry.number < expected {
                        ParseErrorKind::DuplicateNumber(entry.number)
                    } else {
                        ParseErrorKind::OutOfSequence {
                            expected,
                            found: entry.number,
                        }
                    };
                    return Err(err(kind));
                }
                message.obstacles.push(entry);
            }
        }
    }
    Ok(message)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn loc(s: &str) -> SemanticLocation {
        SemanticLocation::parse(s).unwrap()
    }

    fn kw(s: &str) -> EventKeyword {
        EventKeyword::new(s).unwrap()
    }

    #[test]
    fn parses_single_event_line() {
        let m = parse_mission(
            b"#Event, 1, elevator_repair, elevator_1",
            &KeywordRegistry::default(),
        )
        .unwrap();
        assert_eq!(
            m.events(),
            &[EventRequest {
                number: 1,
                keyword: kw("elevator_repair"),
                location: loc("elevator_1"),
            }]
        );
        assert!(m.obstacles().is_empty());
    }

    #[test]
    fn empty_file_is_empty_mission() {
        let m = parse_mission(b"", &KeywordRegistry::default()).unwrap();
        assert!(m.is_empty());
        assert_eq!(serialize_mission(&m), b"");
    }

    #[test]
    fn duplicate_obstacle_number_reports_line() {
        let err = parse_mission(
            b"#Obstacle, 1, chair, 3, corridor_5\n#Obstacle, 1, table, 1, corner_2",
            &KeywordRegistry::default(),
        )
        .unwrap_err();
        assert_eq!(err.line, 2);
        assert_eq!(err.kind, ParseErrorKind::DuplicateNumber(1));
    }

    #[test]
    fn event_and_obstacle_numbering_are_independent() {
        let m = parse_mission(
            b"#Event, 1, class_waiting, corner_2\n#Obstacle, 1, chair, 3, corridor_5\n",
            &KeywordRegistry::default(),
        )
        .unwrap();
        assert_eq!(m.events().len(), 1);
        assert_eq!(m.obstacles().len(), 1);
    }

    #[test]
    fn serializes_canonical_event() {
        let m = MissionMessage::new(
            vec![EventRequest {
                number: 2,
                keyword: kw("class_waiting"),
                location: loc("corner_2"),
            }],
            vec![],
        )
        .unwrap();
        assert_eq!(m.to_text(), "#Event, 2, class_waiting, corner_2\n");
    }

    #[test]
    fn events_serialize_before_obstacles() {
        let ob = |n, c| ObstacleEntry {
            number: n,
            obstacle_type: c,
            count: 1,
            location: loc("corridor_1"),
        };
        let m = MissionMessage::new(
            vec![EventRequest {
                number: 1,
                keyword: kw("elevator_repair"),
                location: loc("elevator_1"),
            }],
            vec![ob(1, ObstacleClass::Chair), ob(2, ObstacleClass::Door)],
        )
        .unwrap();
        let text = m.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("#Event"));
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn lenient_input_is_canonicalized() {
        let text =
            b"#Obstacle ,1,  Trash Can , 2 ,Corridor 5\r\n\r\n#Event,1,Class Waiting,corner_2\r\n";
        let m = parse_mission(text, &KeywordRegistry::default()).unwrap();
        assert_eq!(
            m.to_text(),
            "#Event, 1, class_waiting, corner_2\n#Obstacle, 1, trash_can, 2, corridor_5\n"
        );
    }

    #[test]
    fn mission_errors() {
        let reg = KeywordRegistry::default();
        let kind = |t: &[u8]| parse_mission(t, &reg).unwrap_err().kind;
        assert!(matches!(
            kind(b"#Event, 1, fire_drill, corner_2"),
            ParseErrorKind::UnknownKeyword(_)
        ));
        assert!(matches!(
            kind(b"#Obstacle, 1, stove, 1, corner_2"),
            ParseErrorKind::UnknownObstacleClass(_)
        ));
        assert!(matches!(
            kind(b"#Obstacle, 1, chair, 1, corner_0"),
            ParseErrorKind::BadLocation(_)
        ));
        assert!(matches!(
            kind(b"#Obstacle, 1, chair, 0, corner_1"),
            ParseErrorKind::MalformedLine(_)
        ));
        assert!(matches!(
            kind(b"#Obstacle, x, chair, 1, corner_1"),
            ParseErrorKind::MalformedLine(_)
        ));
        assert!(matches!(
            kind(b"#Event, 1, class_waiting"),
            ParseErrorKind::MalformedLine(_)
        ));
        assert!(matches!(
            kind(b"Event, 1, class_waiting, corner_2"),
            ParseErrorKind::MalformedLine(_)
        ));
        assert!(matches!(
            kind(b"#Event, 99999999999, class_waiting, corner_2"),
            ParseErrorKind::MalformedLine(_)
        ));
        assert!(matches!(
            kind(b"\xff\xfe"),
            ParseErrorKind::MalformedLine(_)
        ));
    }

    #[test]
    fn parses_update_with_result_and_obstacle() {
        let u = parse_update(b"#Event, 1, 1\n#Obstacle, 1, warning_signal, 1, elevator_1").unwrap();
        assert_eq!(
            u.event_results(),
            &[EventResult {
                number: 1,
                ongoing: true
            }]
        );
        assert_eq!(
            u.obstacles(),
            &[ObstacleEntry {
                number: 1,
                obstacle_type: ObstacleClass::WarningSignal,
                count: 1,
                location: loc("elevator_1"),
            }]
        );
    }

    #[test]
    fn update_rejects_result_outside_binary() {
        let err = parse_update(b"#Event, 1, 2").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::BadResult("2".into()));
        let err = parse_update(b"#Event, 1, yes").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::MalformedLine(_)));
        let err = parse_update(b"#Event, 1, 1, 1").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::MalformedLine(_)));
    }

    #[test]
    fn update_obstacles_must_be_consecutive() {
        let err = parse_update(b"#Obstacle, 2, chair, 1, corner_1").unwrap_err();
        assert_eq!(
            err.kind,
            ParseErrorKind::OutOfSequence {
                expected: 1,
                found: 2
            }
        );
        let err =
            parse_update(b"#Obstacle, 1, chair, 1, corner_1\n#Obstacle, 1, door, 1, corner_1")
                .unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::DuplicateNumber(1));
        assert_eq!(err.line, 2);
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_token("Trash Can").unwrap(), "trash_can");
        assert_eq!(
            normalize_token("  Chair with desk ").unwrap(),
            "chair_with_desk"
        );
        assert_eq!(
            normalize_token("Hand\t Washer  Rod").unwrap(),
            "hand_washer_rod"
        );
        assert_eq!(
            normalize_token("stove!"),
            Err(TokenError::InvalidCharacters("stove!".into()))
        );
        assert_eq!(normalize_token("   "), Err(TokenError::EmptyToken));
        assert!(normalize_token("5th").is_err());
    }

    #[test]
    fn location_grammar() {
        assert_eq!(loc("corridor_5").kind(), "corridor");
        assert_eq!(loc("corner_12").index(), 12);
        for bad in [
            "corridor",
            "corridor_0",
            "corridor_05",
            "_5",
            "Corridor_5",
            "cor2_1",
            "corridor_-1",
        ] {
            assert!(SemanticLocation::parse(bad).is_err(), "{bad}");
        }
        assert_eq!(
            SemanticLocation::parse_lenient(" Corner 2 ").unwrap(),
            loc("corner_2")
        );
    }

    #[test]
    fn class_set_is_closed_and_ordered() {
        assert_eq!(ObstacleClass::ALL.len(), 11);
        for (i, c) in ObstacleClass::ALL.iter().enumerate() {
            assert_eq!(c.index(), i);
            assert_eq!(ObstacleClass::from_token(c.token()), Some(*c));
        }
        assert!(ObstacleClass::Table < ObstacleClass::Chair);
        assert_eq!(
            "Telephone Booth".parse::<ObstacleClass>(),
            Ok(ObstacleClass::TelephoneBooth)
        );
    }

    #[test]
    fn registry_builtins_are_fixed() {
        let mut reg = KeywordRegistry::default();
        assert!(!reg.register(
            kw("class_waiting"),
            EventRule {
                class: ObstacleClass::Door,
                min_count: 1
            }
        ));
        assert!(reg.register(
            kw("spill_cleanup"),
            EventRule {
                class: ObstacleClass::WarningSignal,
                min_count: 2
            }
        ));
        assert_eq!(reg.resolve("Spill Cleanup"), Some(kw("spill_cleanup")));
        assert_eq!(reg.rule(&kw("class_waiting")).unwrap().min_count, 3);
    }

    #[test]
    fn message_constructors_enforce_invariants() {
        let ob = |n, count| ObstacleEntry {
            number: n,
            obstacle_type: ObstacleClass::Chair,
            count,
            location: loc("corridor_1"),
        };
        assert_eq!(
            MissionMessage::new(vec![], vec![ob(1, 1), ob(1, 2)]),
            Err(MessageError::DuplicateNumber(1))
        );
        assert_eq!(
            MissionMessage::new(vec![], vec![ob(1, 0)]),
            Err(MessageError::ZeroCount)
        );
        assert_eq!(
            UpdateMessage::new(vec![], vec![ob(2, 1)]),
            Err(MessageError::OutOfSequence {
                expected: 1,
                found: 2
            })
        );
        let u = UpdateMessage::renumbered(vec![], vec![ob(7, 1), ob(3, 1)]).unwrap();
        assert_eq!(u.obstacles()[1].number, 2);
    }
}
