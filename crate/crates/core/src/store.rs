//! Logical tables and the report lifecycle.
//!
//! Crowd reports land in `events` / `obstacles` as *pending*, move to
//! *dispatched* when a mission carries them to the robot, and end as
//! *verified* or *refuted* when the robot's update comes back. Verified
//! observations live in `events_verified` and `obstacles_verified`; the
//! latter is fully refreshed for every area a patrol covers.
//!
//! [`Tables`] is plain data. Persistence and locking belong to the std
//! crate, which wraps every mutation in a clone-apply-swap transaction.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::gamification::{Badge, LedgerEntry, Notification};
use crate::protocol::{
    EventKeyword, EventRequest, MissionMessage, ObstacleClass, ObstacleEntry, SemanticLocation,
    UpdateMessage,
};
use crate::Timestamp;

pub type UserId = u64;
pub type ReportId = u64;
pub type MissionId = u64;
/// Sequence number of an applied update (the Update file revision).
pub type PatrolId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserCategory {
    Registered,
    Guest,
    Maintenance,
}

impl UserCategory {
    /// Name of the logical table holding users of this category.
    pub fn table(self) -> &'static str {
        match self {
            UserCategory::Registered => "users",
            UserCategory::Guest => "users_guests",
            UserCategory::Maintenance => "users_maintenance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct User {
    pub id: UserId,
    pub display_name: String,
    pub category: UserCategory,
    pub created_at: Timestamp,
    /// Reports of this user later confirmed by the robot.
    pub confirmed_count: u32,
    /// Reports of this user the robot could not confirm.
    pub refuted_count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Obstacle,
    Event,
}

/// What a crowd member claims. Mission numbers are assigned at dispatch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReportPayload {
    Obstacle {
        obstacle_type: ObstacleClass,
        count: u32,
        location: SemanticLocation,
    },
    Event {
        keyword: EventKeyword,
        location: SemanticLocation,
    },
}

impl ReportPayload {
    pub fn kind(&self) -> ReportKind {
        match self {
            ReportPayload::Obstacle { .. } => ReportKind::Obstacle,
            ReportPayload::Event { .. } => ReportKind::Event,
        }
    }

    pub fn location(&self) -> &SemanticLocation {
        match self {
            ReportPayload::Obstacle { location, .. } | ReportPayload::Event { location, .. } => {
                location
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportStatus {
    Pending,
    Dispatched,
    Verified,
    Refuted,
}

impl ReportStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, ReportStatus::Verified | ReportStatus::Refuted)
    }

    fn can_become(self, next: ReportStatus) -> bool {
        matches!(
            (self, next),
            (ReportStatus::Pending, ReportStatus::Dispatched)
                | (ReportStatus::Dispatched, ReportStatus::Verified)
                | (ReportStatus::Dispatched, ReportStatus::Refuted)
        )
    }
}

impl fmt::Display for ReportStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportStatus::Pending => "pending",
            ReportStatus::Dispatched => "dispatched",
            ReportStatus::Verified => "verified",
            ReportStatus::Refuted => "refuted",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub id: ReportId,
    pub reporter: UserId,
    pub payload: ReportPayload,
    pub submitted_at: Timestamp,
    pub status: ReportStatus,
    /// Latest mission that carried this report.
    pub mission: Option<MissionId>,
    pub resolved_at: Option<Timestamp>,
}

/// A robot verdict on an event. `ongoing = false` rows record refutations
/// and end any earlier `ongoing = true` row for the same keyword and place.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifiedEvent {
    pub record_id: u64,
    pub patrol_id: PatrolId,
    pub mission_id: MissionId,
    pub number: u32,
    pub keyword: EventKeyword,
    pub location: SemanticLocation,
    pub ongoing: bool,
    pub verified_at: Timestamp,
    pub reports: Vec<ReportId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifiedObstacle {
    pub record_id: u64,
    pub patrol_id: PatrolId,
    pub entry: ObstacleEntry,
    pub verified_at: Timestamp,
}

/// Last time a patrol refreshed an area, even when it found nothing there.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AreaPatrol {
    pub location: SemanticLocation,
    pub patrol_id: PatrolId,
    pub patrolled_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissionEvent {
    pub number: u32,
    pub keyword: EventKeyword,
    pub location: SemanticLocation,
    /// Crowd reports answered by this event; empty for a re-check of an
    /// event that is already verified as ongoing.
    pub reports: Vec<ReportId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissionObstacle {
    pub number: u32,
    pub report: ReportId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissionRecord {
    pub id: MissionId,
    pub created_at: Timestamp,
    pub events: Vec<MissionEvent>,
    pub obstacles: Vec<MissionObstacle>,
    /// Channel revision the mission was published under.
    pub revision: Option<u64>,
    pub answered_by: Option<PatrolId>,
}

impl MissionRecord {
    pub fn report_ids(&self) -> Vec<ReportId> {
        let mut ids: Vec<ReportId> = self
            .events
            .iter()
            .flat_map(|e| e.reports.iter().copied())
            .chain(self.obstacles.iter().map(|o| o.report))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub next_user: UserId,
    pub next_report: ReportId,
    pub next_record: u64,
    pub next_mission: MissionId,
    pub next_notification: u64,
    pub last_patrol: Option<PatrolId>,
    pub last_patrol_at: Option<Timestamp>,
}

impl Default for Meta {
    fn default() -> Self {
        Self {
            next_user: 1,
            next_report: 1,
            next_record: 1,
            next_mission: 1,
            next_notification: 1,
            last_patrol: None,
            last_patrol_at: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StoreError {
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
    #[error("unknown report {0}")]
    UnknownReport(ReportId),
    #[error("unknown mission {0}")]
    UnknownMission(MissionId),
    #[error("update refers to event number {0}, which the mission does not carry")]
    UnknownMissionNumber(u32),
    #[error("stale update: {0}")]
    StaleUpdate(String),
    #[error("report {report} cannot move from {from} to {to}")]
    InvalidTransition {
        report: ReportId,
        from: ReportStatus,
        to: ReportStatus,
    },
    #[error("corrupt table data: {0}")]
    Corrupt(String),
}

impl StoreError {
    pub fn name(&self) -> &'static str {
        match self {
            StoreError::UnknownUser(_) => "UnknownUser",
            StoreError::InvalidPayload(_) => "InvalidPayload",
            StoreError::UnknownReport(_) => "UnknownReport",
            StoreError::UnknownMission(_) => "UnknownMission",
            StoreError::UnknownMissionNumber(_) => "UnknownMissionNumber",
            StoreError::StaleUpdate(_) => "StaleUpdate",
            StoreError::InvalidTransition { .. } => "InvalidTransition",
            StoreError::Corrupt(_) => "Corrupt",
        }
    }
}

/// Output of [`Tables::build_mission`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DispatchedMission {
    pub mission_id: MissionId,
    pub message: MissionMessage,
    pub reports: Vec<ReportId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppliedCounts {
    pub events_ongoing: usize,
    pub events_ended: usize,
    pub obstacle_rows: usize,
    pub reports_verified: Vec<ReportId>,
    pub reports_refuted: Vec<ReportId>,
    /// Users who just earned `trusted_reporter`.
    pub new_trusted: Vec<UserId>,
}

/// Current verified state of one area.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifiedView<'a> {
    pub obstacles: Vec<&'a VerifiedObstacle>,
    /// Latest verdict per keyword at this location.
    pub events: Vec<&'a VerifiedEvent>,
    pub verified_at: Option<Timestamp>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Tables {
    meta: Meta,
    users: BTreeMap<UserId, User>,
    reports: BTreeMap<ReportId, Report>,
    events_verified: Vec<VerifiedEvent>,
    obstacles_verified: Vec<VerifiedObstacle>,
    areas_patrolled: BTreeMap<SemanticLocation, AreaPatrol>,
    missions: BTreeMap<MissionId, MissionRecord>,
    pub(crate) ledger: Vec<LedgerEntry>,
    pub(crate) badges: Vec<Badge>,
    pub(crate) notifications: Vec<Notification>,
}

impl Tables {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn meta(&self) -> &Meta {
        &self.meta
    }

    pub(crate) fn next_notification_id(&mut self) -> u64 {
        let id = self.meta.next_notification;
        self.meta.next_notification += 1;
        id
    }

    // ---- users ----------------------------------------------------------

    /// Guests get a generated display name; `name` is ignored for them.
    pub fn add_user(&mut self, name: &str, category: UserCategory, now: Timestamp) -> UserId {
        let id = self.meta.next_user;
        self.meta.next_user += 1;
        let display_name = match category {
            UserCategory::Guest => format!("guest-{id}"),
            _ => String::from(name.trim()),
        };
        self.users.insert(
            id,
            User {
                id,
                display_name,
                category,
                created_at: now,
                confirmed_count: 0,
                refuted_count: 0,
            },
        );
        id
    }

    pub fn user(&self, id: UserId) -> Option<&User> {
        self.users.get(&id)
    }

    /// Registered or maintenance user with this display name.
    pub fn user_by_name(&self, name: &str) -> Option<&User> {
        let name = name.trim();
        self.users
            .values()
            .find(|u| u.category != UserCategory::Guest && u.display_name == name)
    }

    pub fn users(&self) -> impl Iterator<Item = &User> {
        self.users.values()
    }

    // ---- reports --------------------------------------------------------

    pub fn insert_report(
        &mut self,
        reporter: UserId,
        payload: ReportPayload,
        now: Timestamp,
    ) -> Result<ReportId, StoreError> {
        if !self.users.contains_key(&reporter) {
            return Err(StoreError::UnknownUser(reporter));
        }
        if let ReportPayload::Obstacle { count: 0, .. } = payload {
            return Err(StoreError::InvalidPayload(
                "obstacle count must be at least 1".into(),
            ));
        }
        let id = self.meta.next_report;
        self.meta.next_report += 1;
        self.reports.insert(
            id,
            Report {
                id,
                reporter,
                payload,
                submitted_at: now,
                status: ReportStatus::Pending,
                mission: None,
                resolved_at: None,
            },
        );
        Ok(id)
    }

    pub fn report(&self, id: ReportId) -> Option<&Report> {
        self.reports.get(&id)
    }

    pub fn reports(&self) -> impl Iterator<Item = &Report> {
        self.reports.values()
    }

    fn transition(
        &mut self,
        id: ReportId,
        to: ReportStatus,
        now: Timestamp,
    ) -> Result<(), StoreError> {
        let report = self
            .reports
            .get_mut(&id)
            .ok_or(StoreError::UnknownReport(id))?;
        if !report.status.can_become(to) {
            return Err(StoreError::InvalidTransition {
                report: id,
                from: report.status,
                to,
            });
        }
        report.status = to;
        if to.is_terminal() {
            report.resolved_at = Some(now);
            let reporter = report.reporter;
            if let Some(user) = self.users.get_mut(&reporter) {
                match to {
                    ReportStatus::Verified => user.confirmed_count += 1,
                    _ => user.refuted_count += 1,
                }
            }
        }
        Ok(())
    }

    // ---- missions -------------------------------------------------------

    pub fn mission(&self, id: MissionId) -> Option<&MissionRecord> {
        self.missions.get(&id)
    }

    pub fn missions(&self) -> impl Iterator<Item = &MissionRecord> {
        self.missions.values()
    }

    pub fn latest_mission(&self) -> Option<&MissionRecord> {
        self.missions.values().next_back()
    }

    /// The latest mission, if the robot has not answered it yet.
    pub fn outstanding_mission(&self) -> Option<&MissionRecord> {
        self.latest_mission().filter(|m| m.answered_by.is_none())
    }

    pub fn set_mission_revision(&mut self, id: MissionId, revision: u64) -> Result<(), StoreError> {
        let m = self
            .missions
            .get_mut(&id)
            .ok_or(StoreError::UnknownMission(id))?;
        m.revision = Some(revision);
        Ok(())
    }

    /// Gather everything that needs the robot's eyes into a new mission.
    ///
    /// Pending reports (and dispatched ones an earlier update left
    /// unanswered) are numbered per type, 1..n, in submission order with
    /// report id breaking ties. Event reports naming the same keyword and
    /// place share one mission event. Events currently verified as ongoing
    /// are appended as re-checks, so a later patrol can end them.
    pub fn build_mission(&mut self, now: Timestamp) -> DispatchedMission {
        let mut open: Vec<&Report> = self
            .reports
            .values()
            .filter(|r| matches!(r.status, ReportStatus::Pending | ReportStatus::Dispatched))
            .collect();
        open.sort_by_key(|r| (r.submitted_at, r.id));

        let mut events: Vec<MissionEvent> = Vec::new();
        let mut obstacles: Vec<MissionObstacle> = Vec::new();
        let mut obstacle_entries: Vec<ObstacleEntry> = Vec::new();
        for r in &open {
            match &r.payload {
                ReportPayload::Event { keyword, location } => {
                    match events
                        .iter_mut()
                        .find(|e| &e.keyword == keyword && &e.location == location)
                    {
                        Some(e) => e.reports.push(r.id),
                        None => events.push(MissionEvent {
                            number: events.len() as u32 + 1,
                            keyword: keyword.clone(),
                            location: location.clone(),
                            reports: alloc::vec![r.id],
                        }),
                    }
                }
                ReportPayload::Obstacle {
                    obstacle_type,
                    count,
                    location,
                } => {
                    let number = obstacles.len() as u32 + 1;
                    obstacles.push(MissionObstacle {
                        number,
                        report: r.id,
                    });
                    obstacle_entries.push(ObstacleEntry {
                        number,
                        obstacle_type: *obstacle_type,
                        count: *count,
                        location: location.clone(),
                    });
                }
            }
        }
        for ev in self.current_events() {
            if !ev.ongoing
                || events
                    .iter()
                    .any(|e| e.keyword == ev.keyword && e.location == ev.location)
            {
                continue;
            }
            events.push(MissionEvent {
                number: events.len() as u32 + 1,
                keyword: ev.keyword.clone(),
                location: ev.location.clone(),
                reports: Vec::new(),
            });
        }

        let id = self.meta.next_mission;
        self.meta.next_mission += 1;
        let record = MissionRecord {
            id,
            created_at: now,
            events,
            obstacles,
            revision: None,
            answered_by: None,
        };
        let reports = record.report_ids();
        for rid in &reports {
            let r = self.reports.get_mut(rid).expect("collected from the table");
            r.mission = Some(id);
            if r.status == ReportStatus::Pending {
                r.status = ReportStatus::Dispatched;
            }
        }
        let message = MissionMessage::new(
            record
                .events
                .iter()
                .map(|e| EventRequest {
                    number: e.number,
                    keyword: e.keyword.clone(),
                    location: e.location.clone(),
                })
                .collect(),
            obstacle_entries,
        )
        .expect("numbers assigned 1..n per type");
        self.missions.insert(id, record);
        DispatchedMission {
            mission_id: id,
            message,
            reports,
        }
    }

    /// Fold a robot update into the tables.
    ///
    /// Event results decide the carried reports and append an
    /// `events_verified` row each. Obstacle rows replace everything
    /// previously verified in `covered` (plus any area the update itself
    /// mentions); carried obstacle reports become verified when a row with
    /// the same class and place exists, refuted otherwise.
    pub fn apply_update(
        &mut self,
        mission_id: MissionId,
        update: &UpdateMessage,
        patrol_id: PatrolId,
        covered: &[SemanticLocation],
        now: Timestamp,
    ) -> Result<AppliedCounts, StoreError> {
        let mission = self
            .missions
            .get(&mission_id)
            .ok_or(StoreError::UnknownMission(mission_id))?;
        if let Some(p) = mission.answered_by {
            return Err(StoreError::StaleUpdate(format!(
                "mission {mission_id} was already answered by patrol {p}"
            )));
        }
        if self.latest_mission().map(|m| m.id) != Some(mission_id) {
            return Err(StoreError::StaleUpdate(format!(
                "mission {mission_id} has been superseded"
            )));
        }
        if let Some(last) = self.meta.last_patrol {
            if patrol_id <= last {
                return Err(StoreError::StaleUpdate(format!(
                    "patrol {patrol_id} is not newer than applied patrol {last}"
                )));
            }
        }
        if now < mission.created_at || self.meta.last_patrol_at.is_some_and(|t| now < t) {
            return Err(StoreError::StaleUpdate(
                "verification time precedes the mission or the previous patrol".into(),
            ));
        }
        for r in update.event_results() {
            if !mission.events.iter().any(|e| e.number == r.number) {
                return Err(StoreError::UnknownMissionNumber(r.number));
            }
        }
        let mission = mission.clone();

        let mut counts = AppliedCounts::default();
        for result in update.event_results() {
            let ev = mission
                .events
                .iter()
                .find(|e| e.number == result.number)
                .expect("checked above");
            let record_id = self.meta.next_record;
            self.meta.next_record += 1;
            self.events_verified.push(VerifiedEvent {
                record_id,
                patrol_id,
                mission_id,
                number: ev.number,
                keyword: ev.keyword.clone(),
                location: ev.location.clone(),
                ongoing: result.ongoing,
                verified_at: now,
                reports: ev.reports.clone(),
            });
            let to = if result.ongoing {
                counts.events_ongoing += 1;
                ReportStatus::Verified
            } else {
                counts.events_ended += 1;
                ReportStatus::Refuted
            };
            for rid in &ev.reports {
                if self.reports.get(rid).map(|r| r.status) == Some(ReportStatus::Dispatched) {
                    self.transition(*rid, to, now)?;
                    match to {
                        ReportStatus::Verified => counts.reports_verified.push(*rid),
                        _ => counts.reports_refuted.push(*rid),
                    }
                }
            }
        }

        let mut refreshed: BTreeSet<SemanticLocation> = covered.iter().cloned().collect();
        refreshed.extend(update.obstacles().iter().map(|o| o.location.clone()));
        self.obstacles_verified
            .retain(|row| !refreshed.contains(&row.entry.location));
        for entry in update.obstacles() {
            let record_id = self.meta.next_record;
            self.meta.next_record += 1;
            self.obstacles_verified.push(VerifiedObstacle {
                record_id,
                patrol_id,
                entry: entry.clone(),
                verified_at: now,
            });
        }
        counts.obstacle_rows = update.obstacles().len();
        for location in refreshed {
            self.areas_patrolled.insert(
                location.clone(),
                AreaPatrol {
                    location,
                    patrol_id,
                    patrolled_at: now,
                },
            );
        }

        for ob in &mission.obstacles {
            let Some(report) = self.reports.get(&ob.report) else {
                continue;
            };
            if report.status != ReportStatus::Dispatched {
                continue;
            }
            let ReportPayload::Obstacle {
                obstacle_type,
                location,
                ..
            } = &report.payload
            else {
                continue;
            };
            let seen = update
                .obstacles()
                .iter()
                .any(|o| o.obstacle_type == *obstacle_type && &o.location == location);
            let to = if seen {
                ReportStatus::Verified
            } else {
                ReportStatus::Refuted
            };
            self.transition(ob.report, to, now)?;
            match to {
                ReportStatus::Verified => counts.reports_verified.push(ob.report),
                _ => counts.reports_refuted.push(ob.report),
            }
        }

        self.missions
            .get_mut(&mission_id)
            .expect("checked above")
            .answered_by = Some(patrol_id);
        self.meta.last_patrol = Some(patrol_id);
        self.meta.last_patrol_at = Some(now);
        counts.new_trusted = self.award_trusted_reporters(now);
        Ok(counts)
    }

    // ---- verified state ---------------------------------------------------

    /// Latest verdict per (keyword, location), ordered by that key.
    pub fn current_events(&self) -> impl Iterator<Item = &VerifiedEvent> {
        let mut latest: BTreeMap<(&SemanticLocation, &EventKeyword), &VerifiedEvent> =
            BTreeMap::new();
        for ev in &self.events_verified {
            latest.insert((&ev.location, &ev.keyword), ev);
        }
        latest.into_values()
    }

    pub fn events_verified(&self) -> &[VerifiedEvent] {
        &self.events_verified
    }

    pub fn obstacles_verified(&self) -> &[VerifiedObstacle] {
        &self.obstacles_verified
    }

    pub fn area_patrol(&self, location: &SemanticLocation) -> Option<&AreaPatrol> {
        self.areas_patrolled.get(location)
    }

    pub fn query_verified(&self, location: &SemanticLocation) -> VerifiedView<'_> {
        let obstacles: Vec<&VerifiedObstacle> = self
            .obstacles_verified
            .iter()
            .filter(|o| &o.entry.location == location)
            .collect();
        let events: Vec<&VerifiedEvent> = self
            .current_events()
            .filter(|e| &e.location == location)
            .collect();
        let verified_at = obstacles
            .iter()
            .map(|o| o.verified_at)
            .chain(events.iter().map(|e| e.verified_at))
            .chain(self.areas_patrolled.get(location).map(|a| a.patrolled_at))
            .max();
        VerifiedView {
            obstacles,
            events,
            verified_at,
        }
    }

    // ---- export / import ---------------------------------------------------

    /// Every row of every table, in a stable order.
    pub fn rows(&self) -> Vec<Row> {
        let mut rows = alloc::vec![Row::Meta(self.meta.clone())];
        for u in self.users.values() {
            rows.push(match u.category {
                UserCategory::Registered => Row::Users(u.clone()),
                UserCategory::Guest => Row::UsersGuests(u.clone()),
                UserCategory::Maintenance => Row::UsersMaintenance(u.clone()),
            });
        }
        for r in self.reports.values() {
            rows.push(match r.payload.kind() {
                ReportKind::Event => Row::Events(r.clone()),
                ReportKind::Obstacle => Row::Obstacles(r.clone()),
            });
        }
        rows.extend(
            self.events_verified
                .iter()
                .cloned()
                .map(Row::EventsVerified),
        );
        rows.extend(
            self.obstacles_verified
                .iter()
                .cloned()
                .map(Row::ObstaclesVerified),
        );
        rows.extend(
            self.areas_patrolled
                .values()
                .cloned()
                .map(Row::AreasPatrolled),
        );
        rows.extend(self.missions.values().cloned().map(Row::Missions));
        rows.extend(self.ledger.iter().cloned().map(Row::Ledger));
        rows.extend(self.badges.iter().cloned().map(Row::Badges));
        rows.extend(self.notifications.iter().cloned().map(Row::Notifications));
        rows
    }

    pub fn from_rows<I: IntoIterator<Item = Row>>(rows: I) -> Result<Self, StoreError> {
        let mut t = Tables::default();
        let mut saw_meta = false;
        let corrupt = |m: String| StoreError::Corrupt(m);
        for row in rows {
            match row {
                Row::Meta(m) => {
                    if saw_meta {
                        return Err(corrupt("two meta rows".into()));
                    }
                    saw_meta = true;
                    t.meta = m;
                }
                Row::Users(u) | Row::UsersGuests(u) | Row::UsersMaintenance(u) => {
                    if t.users.insert(u.id, u.clone()).is_some() {
                        return Err(corrupt(format!("user {} listed twice", u.id)));
                    }
                }
                Row::Events(r) | Row::Obstacles(r) => {
                    if !t.users.contains_key(&r.reporter) {
                        return Err(corrupt(format!(
                            "report {} joins to missing user {}",
                            r.id, r.reporter
                        )));
                    }
                    if t.reports.insert(r.id, r.clone()).is_some() {
                        return Err(corrupt(format!("report {} listed twice", r.id)));
                    }
                }
                Row::EventsVerified(e) => t.events_verified.push(e),
                Row::ObstaclesVerified(o) => t.obstacles_verified.push(o),
                Row::AreasPatrolled(a) => {
                    t.areas_patrolled.insert(a.location.clone(), a);
                }
                Row::Missions(m) => {
                    t.missions.insert(m.id, m);
                }
                Row::Ledger(l) => t.ledger.push(l),
                Row::Badges(b) => t.badges.push(b),
                Row::Notifications(n) => t.notifications.push(n),
            }
        }
        if !saw_meta && !t.users.is_empty() {
            return Err(corrupt("missing meta row".into()));
        }
        let max_user = t.users.keys().next_back().copied().unwrap_or(0);
        let max_report = t.reports.keys().next_back().copied().unwrap_or(0);
        if t.meta.next_user <= max_user || t.meta.next_report <= max_report {
            return Err(corrupt("id counters behind stored rows".into()));
        }
        Ok(t)
    }
}

/// One exported row, tagged with the name of its logical table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "table", rename_all = "snake_case")]
pub enum Row {
    Meta(Meta),
    Users(User),
    UsersGuests(User),
    UsersMaintenance(User),
    Events(Report),
    Obstacles(Report),
    EventsVerified(VerifiedEvent),
    ObstaclesVerified(VerifiedObstacle),
    AreasPatrolled(AreaPatrol),
    Missions(MissionRecord),
    Ledger(LedgerEntry),
    Badges(Badge),
    Notifications(Notification),
}
