//! Application service: sessions, reports, dispatch, update sync,
//! advisories and incentives over one datastore and one channel.
//!
//! The HTTP layer and the scenario runner are thin adapters over this type.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use chrono::TimeDelta;
use serde::Serialize;

use patrol_core::advisory::{default_ttl, render_advisory, route_advisory, AdvisoryError};
use patrol_core::gamification::{Action, BadgeKind, GamificationError, Period, Scoring};
use patrol_core::protocol::{ParseError, MISSION_FILE, UPDATE_FILE};
use patrol_core::store::{
    AppliedCounts, MissionId, ReportId, ReportPayload, ReportStatus, StoreError, UserCategory,
    UserId,
};
use patrol_core::{
    Advisory, KeywordRegistry, ObstacleClass, SemanticLocation, SemanticMap, Timestamp,
    UpdateMessage,
};

use crate::channel::{ChannelError, SyncChannel};
use crate::clock::Clock;
use crate::datastore::{Datastore, DatastoreError};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("unknown or expired session token")]
    UnknownToken,
    #[error("unknown report draft `{0}`")]
    UnknownDraft(String),
    #[error("{message}")]
    Validation { name: &'static str, message: String },
    #[error("unknown location {0}")]
    UnknownLocation(String),
    #[error("unknown report {0}")]
    UnknownReport(ReportId),
    #[error("report {0} has not been verified")]
    NotVerified(ReportId),
    #[error("mission {0} is still waiting for the robot")]
    MissionInFlight(MissionId),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Protocol(#[from] ParseError),
    #[error(transparent)]
    Datastore(#[from] DatastoreError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Broad outcome class of an error, for transport mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    BadRequest,
    Unauthorized,
    NotFound,
    Conflict,
    Unavailable,
    Internal,
}

impl ServiceError {
    fn validation(name: &'static str, message: impl Into<String>) -> Self {
        ServiceError::Validation {
            name,
            message: message.into(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ServiceError::UnknownToken => "UnknownToken",
            ServiceError::UnknownDraft(_) => "UnknownDraft",
            ServiceError::Validation { name, .. } => name,
            ServiceError::UnknownLocation(_) => "UnknownLocation",
            ServiceError::UnknownReport(_) => "UnknownReport",
            ServiceError::NotVerified(_) => "NotVerified",
            ServiceError::MissionInFlight(_) => "MissionInFlight",
            ServiceError::Store(e) => e.name(),
            ServiceError::Protocol(e) => e.kind.name(),
            ServiceError::Datastore(_) => "DatastoreError",
            ServiceError::Channel(ChannelError::ChannelUnavailable { .. }) => "ChannelUnavailable",
            ServiceError::Channel(_) => "ChannelError",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            ServiceError::UnknownToken => ErrorClass::Unauthorized,
            ServiceError::UnknownDraft(_)
            | ServiceError::Validation { .. }
            | ServiceError::Protocol(_) => ErrorClass::BadRequest,
            ServiceError::UnknownLocation(_) | ServiceError::UnknownReport(_) => {
                ErrorClass::NotFound
            }
            ServiceError::NotVerified(_) | ServiceError::MissionInFlight(_) => ErrorClass::Conflict,
            ServiceError::Store(StoreError::UnknownUser(_))
            | ServiceError::Store(StoreError::UnknownReport(_))
            | ServiceError::Store(StoreError::UnknownMission(_)) => ErrorClass::NotFound,
            ServiceError::Store(StoreError::StaleUpdate(_))
            | ServiceError::Store(StoreError::InvalidTransition { .. }) => ErrorClass::Conflict,
            ServiceError::Store(StoreError::Corrupt(_)) => ErrorClass::Internal,
            ServiceError::Store(_) => ErrorClass::BadRequest,
            ServiceError::Datastore(_) => ErrorClass::Internal,
            ServiceError::Channel(_) => ErrorClass::Unavailable,
        }
    }
}

impl From<GamificationError> for ServiceError {
    fn from(e: GamificationError) -> Self {
        match e {
            GamificationError::UnknownUser(u) => ServiceError::Store(StoreError::UnknownUser(u)),
            GamificationError::UnknownReport(r) => ServiceError::UnknownReport(r),
            GamificationError::NotVerified(r) => ServiceError::NotVerified(r),
        }
    }
}

impl From<AdvisoryError> for ServiceError {
    fn from(e: AdvisoryError) -> Self {
        match e {
            AdvisoryError::EmptyRoute => ServiceError::validation("EmptyRoute", "route is empty"),
            AdvisoryError::UnknownLocation(l) => ServiceError::UnknownLocation(l.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Session {
    pub token: String,
    pub user_id: UserId,
    pub category: UserCategory,
    pub issued_at: Timestamp,
}

#[derive(Debug, Clone)]
struct Draft {
    user_id: UserId,
    report: Option<ReportId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LoginOutcome {
    pub token: String,
    pub user_id: UserId,
    pub display_name: String,
    pub category: UserCategory,
    pub points: u64,
    pub badges: Vec<BadgeKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BeginOutcome {
    pub draft_id: String,
    pub points_awarded: u64,
    pub points: u64,
}

/// A report as submitted by a client, before validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReportRequest {
    Obstacle {
        class: String,
        count: u32,
        location: String,
    },
    Event {
        keyword: String,
        location: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReportOutcome {
    pub report_id: ReportId,
    pub user_id: UserId,
    /// Set when the submission created a guest session.
    pub token: Option<String>,
    pub eligible: bool,
    pub points_awarded: u64,
    pub points: u64,
    pub new_badges: Vec<BadgeKind>,
    /// True when the draft had already been submitted.
    pub replayed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DispatchOutcome {
    pub mission_id: MissionId,
    pub mission_revision: u64,
    pub events: usize,
    pub obstacles: usize,
    pub reports: Vec<ReportId>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SyncOutcome {
    pub update_revision: u64,
    pub mission_id: MissionId,
    pub verified_at: Timestamp,
    pub counts: AppliedCounts,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AdvisoryOutcome {
    pub advisory: Advisory,
    pub sentences: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LeaderRow {
    pub rank: usize,
    pub user_id: UserId,
    pub display_name: String,
    pub points: u64,
    pub badges: Vec<BadgeKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FeedbackOutcome {
    pub report_id: ReportId,
    pub helpful: bool,
    pub notified: Option<UserId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NotificationView {
    pub id: u64,
    pub report_id: ReportId,
    pub at: Timestamp,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Status {
    pub mission_revision: Option<u64>,
    pub update_revision: Option<u64>,
    pub applied_patrol: Option<u64>,
    pub last_patrol_at: Option<Timestamp>,
    pub outstanding_mission: Option<MissionId>,
    pub pending_reports: usize,
    pub dispatched_reports: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportView {
    pub report_id: ReportId,
    pub reporter: UserId,
    pub status: ReportStatus,
    pub submitted_at: Timestamp,
    pub resolved_at: Option<Timestamp>,
}

pub struct PatrolService {
    store: Datastore,
    channel: SyncChannel,
    map: SemanticMap,
    registry: KeywordRegistry,
    clock: Arc<dyn Clock>,
    ttl: TimeDelta,
    sessions: Mutex<HashMap<String, Session>>,
    drafts: Mutex<HashMap<String, Draft>>,
    dispatch_lock: Mutex<()>,
    seen_update: AtomicU64,
}

impl PatrolService {
    pub fn new(
        store: Datastore,
        channel: SyncChannel,
        map: SemanticMap,
        clock: Arc<dyn Clock>,
    ) -> Self {
        let seen = store.read(|t| t.meta().last_patrol.unwrap_or(0));
        Self {
            store,
            channel,
            map,
            registry: KeywordRegistry::default(),
            clock,
            ttl: default_ttl(),
            sessions: Mutex::new(HashMap::new()),
            drafts: Mutex::new(HashMap::new()),
            dispatch_lock: Mutex::new(()),
            seen_update: AtomicU64::new(seen),
        }
    }

    pub fn with_registry(mut self, registry: KeywordRegistry) -> Self {
        self.registry = registry;
        self
    }

    pub fn with_ttl(mut self, ttl: TimeDelta) -> Self {
        self.ttl = ttl;
        self
    }

    pub fn store(&self) -> &Datastore {
        &self.store
    }

    pub fn map(&self) -> &SemanticMap {
        &self.map
    }

    pub fn channel(&self) -> &SyncChannel {
        &self.channel
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now()
    }

    fn issue(&self, user_id: UserId, category: UserCategory) -> Session {
        let session = Session {
            token: uuid::Uuid::new_v4().to_string(),
            user_id,
            category,
            issued_at: self.clock.now(),
        };
        self.sessions
            .lock()
            .unwrap()
            .insert(session.token.clone(), session.clone());
        session
    }

    pub fn session(&self, token: &str) -> Result<Session, ServiceError> {
        self.sessions
            .lock()
            .unwrap()
            .get(token)
            .cloned()
            .ok_or(ServiceError::UnknownToken)
    }

    fn login_outcome(&self, session: Session) -> LoginOutcome {
        self.store.read(|t| {
            let user = t.user(session.user_id).expect("session user exists");
            LoginOutcome {
                token: session.token.clone(),
                user_id: user.id,
                display_name: user.display_name.clone(),
                category: user.category,
                points: t.total_points(user.id),
                badges: t.badges_of(user.id),
            }
        })
    }

    /// Log in a registered or maintenance user, creating them on first use.
    pub fn login(&self, name: &str, category: UserCategory) -> Result<LoginOutcome, ServiceError> {
        if category == UserCategory::Guest {
            return self.guest();
        }
        let name = name.trim();
        if name.is_empty() {
            return Err(ServiceError::validation(
                "EmptyName",
                "name must not be empty",
            ));
        }
        let now = self.clock.now();
        let user_id = self.store.transact(|t| {
            let id = match t.user_by_name(name) {
                Some(u) if u.category != category => {
                    return Err(ServiceError::validation(
                        "CategoryMismatch",
                        format!("{name} is registered as {}", u.category.table()),
                    ))
                }
                Some(u) => u.id,
                None => t.add_user(name, category, now),
            };
            t.record_action(id, Action::Login, None, now)?;
            Ok(id)
        })?;
        Ok(self.login_outcome(self.issue(user_id, category)))
    }

    /// Start an anonymous guest session.
    pub fn guest(&self) -> Result<LoginOutcome, ServiceError> {
        let now = self.clock.now();
        let user_id = self
            .store
            .transact(|t| Ok::<_, ServiceError>(t.add_user("", UserCategory::Guest, now)))?;
        Ok(self.login_outcome(self.issue(user_id, UserCategory::Guest)))
    }

    /// Open a report form. Scores the "started a report" point.
    pub fn begin_report(&self, token: &str) -> Result<BeginOutcome, ServiceError> {
        let session = self.session(token)?;
        let now = self.clock.now();
        let scoring = self.store.transact(|t| {
            Ok::<_, ServiceError>(t.record_action(
                session.user_id,
                Action::ReportStarted,
                None,
                now,
            )?)
        })?;
        let draft_id = uuid::Uuid::new_v4().to_string();
        self.drafts.lock().unwrap().insert(
            draft_id.clone(),
            Draft {
                user_id: session.user_id,
                report: None,
            },
        );
        Ok(BeginOutcome {
            draft_id,
            points_awarded: match scoring {
                Scoring::Scored { .. } => Action::ReportStarted.points(),
                Scoring::GuestNotEligible => 0,
            },
            points: scoring.total(),
        })
    }

    fn location(&self, raw: &str) -> Result<SemanticLocation, ServiceError> {
        let loc = SemanticLocation::parse_lenient(raw)
            .map_err(|e| ServiceError::validation("BadLocation", e.to_string()))?;
        if !self.map.has_area(&loc) {
            return Err(ServiceError::UnknownLocation(loc.to_string()));
        }
        Ok(loc)
    }

    fn payload(&self, req: &ReportRequest) -> Result<ReportPayload, ServiceError> {
        Ok(match req {
            ReportRequest::Obstacle {
                class,
                count,
                location,
            } => {
                let obstacle_type: ObstacleClass = class.parse().map_err(|_| {
                    ServiceError::validation(
                        "UnknownObstacleClass",
                        format!("unknown obstacle class `{class}`"),
                    )
                })?;
                if *count == 0 {
                    return Err(ServiceError::validation(
                        "ZeroCount",
                        "obstacle count must be at least 1",
                    ));
                }
                ReportPayload::Obstacle {
                    obstacle_type,
                    count: *count,
                    location: self.location(location)?,
                }
            }
            ReportRequest::Event { keyword, location } => {
                let keyword = self.registry.resolve(keyword).ok_or_else(|| {
                    ServiceError::validation(
                        "UnknownKeyword",
                        format!("unknown event keyword `{keyword}`"),
                    )
                })?;
                ReportPayload::Event {
                    keyword,
                    location: self.location(location)?,
                }
            }
        })
    }

    /// Submit a report. Without a token a guest session is created. Replaying
    /// a draft returns the report it already produced.
    pub fn submit_report(
        &self,
        token: Option<&str>,
        draft_id: Option<&str>,
        req: &ReportRequest,
    ) -> Result<ReportOutcome, ServiceError> {
        let payload = self.payload(req)?;
        let mut new_token = None;
        let session = match token {
            Some(t) => self.session(t)?,
            None => {
                let guest = self.guest()?;
                new_token = Some(guest.token.clone());
                self.session(&guest.token)?
            }
        };
        let mut drafts = self.drafts.lock().unwrap();
        if let Some(id) = draft_id {
            let draft = drafts
                .get(id)
                .filter(|d| d.user_id == session.user_id)
                .ok_or_else(|| ServiceError::UnknownDraft(id.to_string()))?;
            if let Some(report_id) = draft.report {
                let points = self.store.read(|t| t.total_points(session.user_id));
                return Ok(ReportOutcome {
                    report_id,
                    user_id: session.user_id,
                    token: new_token,
                    eligible: session.category != UserCategory::Guest,
                    points_awarded: 0,
                    points,
                    new_badges: Vec::new(),
                    replayed: true,
                });
            }
        }
        let now = self.clock.now();
        let (report_id, scoring) = self.store.transact(|t| {
            let id = t.insert_report(session.user_id, payload, now)?;
            let scoring =
                t.record_action(session.user_id, Action::ReportCompleted, Some(id), now)?;
            Ok::<_, ServiceError>((id, scoring))
        })?;
        if let Some(id) = draft_id {
            if let Some(d) = drafts.get_mut(id) {
                d.report = Some(report_id);
            }
        }
        let (eligible, points_awarded, points, new_badges) = match scoring {
            Scoring::Scored { total, new_badges } => {
                (true, Action::ReportCompleted.points(), total, new_badges)
            }
            Scoring::GuestNotEligible => (false, 0, 0, Vec::new()),
        };
        Ok(ReportOutcome {
            report_id,
            user_id: session.user_id,
            token: new_token,
            eligible,
            points_awarded,
            points,
            new_badges,
            replayed: false,
        })
    }

    pub fn report(&self, id: ReportId) -> Result<ReportView, ServiceError> {
        self.store.read(|t| {
            t.report(id)
                .map(|r| ReportView {
                    report_id: r.id,
                    reporter: r.reporter,
                    status: r.status,
                    submitted_at: r.submitted_at,
                    resolved_at: r.resolved_at,
                })
                .ok_or(ServiceError::UnknownReport(id))
        })
    }

    /// Package open reports into a mission and publish it to the robot.
    pub fn dispatch(&self) -> Result<DispatchOutcome, ServiceError> {
        let _guard = self.dispatch_lock.lock().unwrap();
        if let Err(e) = self.sync_updates() {
            tracing::warn!(error = %e, "update sync before dispatch failed");
        }
        if let Some(m) = self.store.read(|t| t.outstanding_mission().map(|m| m.id)) {
            return Err(ServiceError::MissionInFlight(m));
        }
        let now = self.clock.now();
        self.store.transact(|t| {
            let d = t.build_mission(now);
            let text = d.message.to_text();
            let revision = self.channel.publish(MISSION_FILE, text.as_bytes(), now)?;
            t.set_mission_revision(d.mission_id, revision)?;
            Ok(DispatchOutcome {
                mission_id: d.mission_id,
                mission_revision: revision,
                events: d.message.events().len(),
                obstacles: d.message.obstacles().len(),
                reports: d.reports,
                text,
            })
        })
    }

    /// Apply a newly published update, if there is one for the outstanding
    /// mission.
    pub fn sync_updates(&self) -> Result<Option<SyncOutcome>, ServiceError> {
        let file = match self.channel.fetch_latest(UPDATE_FILE) {
            Ok(f) => f,
            Err(ChannelError::NotFound(_)) => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        if file.revision <= self.seen_update.load(Ordering::SeqCst) {
            return Ok(None);
        }
        let Some((mission_id, created_at)) = self
            .store
            .read(|t| t.outstanding_mission().map(|m| (m.id, m.created_at)))
        else {
            self.seen_update.store(file.revision, Ordering::SeqCst);
            return Ok(None);
        };
        if file.written_at < created_at {
            self.seen_update.store(file.revision, Ordering::SeqCst);
            return Ok(None);
        }
        self.seen_update.store(file.revision, Ordering::SeqCst);
        let update = UpdateMessage::parse(&file.content)?;
        let covered = self.map.covered_areas();
        let counts = self.store.transact(|t| {
            Ok::<_, ServiceError>(t.apply_update(
                mission_id,
                &update,
                file.revision,
                &covered,
                file.written_at,
            )?)
        })?;
        tracing::info!(
            mission = mission_id,
            update = file.revision,
            "update applied"
        );
        Ok(Some(SyncOutcome {
            update_revision: file.revision,
            mission_id,
            verified_at: file.written_at,
            counts,
        }))
    }

    pub fn advisory(
        &self,
        route: &str,
        ttl: Option<TimeDelta>,
    ) -> Result<AdvisoryOutcome, ServiceError> {
        let mut locations = Vec::new();
        for raw in route.split(',').filter(|s| !s.trim().is_empty()) {
            let loc = SemanticLocation::parse_lenient(raw)
                .map_err(|_| ServiceError::UnknownLocation(raw.trim().to_string()))?;
            locations.push(loc);
        }
        if let Err(e) = self.sync_updates() {
            tracing::warn!(error = %e, "update sync before advisory failed");
        }
        let now = self.clock.now();
        let advisory = self
            .store
            .read(|t| route_advisory(t, &self.map, &locations, now, ttl.unwrap_or(self.ttl)))?;
        let sentences = render_advisory(&advisory);
        Ok(AdvisoryOutcome {
            advisory,
            sentences,
        })
    }

    pub fn leaderboard(&self, n: usize, period: Period) -> Vec<LeaderRow> {
        self.store.read(|t| {
            t.leaderboard(n.max(1), period)
                .into_iter()
                .enumerate()
                .map(|(i, s)| LeaderRow {
                    rank: i + 1,
                    user_id: s.user_id,
                    display_name: t
                        .user(s.user_id)
                        .map(|u| u.display_name.clone())
                        .unwrap_or_default(),
                    points: s.points,
                    badges: t.badges_of(s.user_id),
                })
                .collect()
        })
    }

    pub fn feedback(
        &self,
        report: ReportId,
        helpful: bool,
    ) -> Result<FeedbackOutcome, ServiceError> {
        let now = self.clock.now();
        let notified = self.store.transact(|t| {
            Ok::<_, ServiceError>(t.record_feedback(report, helpful, now)?.map(|n| n.user_id))
        })?;
        Ok(FeedbackOutcome {
            report_id: report,
            helpful,
            notified,
        })
    }

    pub fn notifications(&self, token: &str) -> Result<Vec<NotificationView>, ServiceError> {
        let session = self.session(token)?;
        Ok(self.store.read(|t| {
            t.notifications_for(session.user_id)
                .into_iter()
                .map(|n| NotificationView {
                    id: n.id,
                    report_id: n.report_id,
                    at: n.at,
                    message: format!("Someone found your report {} helpful.", n.report_id),
                })
                .collect()
        }))
    }

    pub fn status(&self) -> Result<Status, ServiceError> {
        let mission_revision = self.channel.revision(MISSION_FILE)?;
        let update_revision = self.channel.revision(UPDATE_FILE)?;
        Ok(self.store.read(|t| Status {
            mission_revision,
            update_revision,
            applied_patrol: t.meta().last_patrol,
            last_patrol_at: t.meta().last_patrol_at,
            outstanding_mission: t.outstanding_mission().map(|m| m.id),
            pending_reports: t
                .reports()
                .filter(|r| r.status == ReportStatus::Pending)
                .count(),
            dispatched_reports: t
                .reports()
                .filter(|r| r.status == ReportStatus::Dispatched)
                .count(),
        }))
    }
}
