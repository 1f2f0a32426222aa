//! Points ledger, badges, leaderboard and helpful-feedback notifications.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use chrono::{Datelike, NaiveTime, TimeDelta};
use serde::{Deserialize, Serialize};

use crate::store::{ReportId, ReportStatus, Tables, UserCategory, UserId};
use crate::{format_timestamp, Timestamp};

pub const BRONZE_POINTS: u64 = 10;
pub const SILVER_POINTS: u64 = 50;
pub const GOLD_POINTS: u64 = 100;
/// Confirmed reports needed for `trusted_reporter`.
pub const TRUSTED_REPORTS: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    Login,
    ReportStarted,
    ReportCompleted,
    FeedbackHelpful,
}

impl Action {
    pub const fn points(self) -> u64 {
        match self {
            Action::Login | Action::ReportStarted => 1,
            Action::ReportCompleted => 5,
            Action::FeedbackHelpful => 0,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            Action::Login => "LOGIN",
            Action::ReportStarted => "REPORT_STARTED",
            Action::ReportCompleted => "REPORT_COMPLETED",
            Action::FeedbackHelpful => "FEEDBACK_HELPFUL",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    /// 1-based position in the ledger.
    pub seq: u64,
    pub user_id: UserId,
    pub action: Action,
    pub points: u64,
    pub at: Timestamp,
    pub report: Option<ReportId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BadgeKind {
    HelperBronze,
    HelperSilver,
    HelperGold,
    TrustedReporter,
}

impl BadgeKind {
    pub const fn name(self) -> &'static str {
        match self {
            BadgeKind::HelperBronze => "helper_bronze",
            BadgeKind::HelperSilver => "helper_silver",
            BadgeKind::HelperGold => "helper_gold",
            BadgeKind::TrustedReporter => "trusted_reporter",
        }
    }
}

impl fmt::Display for BadgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Badge {
    pub user_id: UserId,
    pub badge: BadgeKind,
    pub earned_at: Timestamp,
}

/// Tells a reporter that someone found their report helpful.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Notification {
    pub id: u64,
    pub user_id: UserId,
    pub report_id: ReportId,
    pub at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scoring {
    Scored {
        total: u64,
        new_badges: Vec<BadgeKind>,
    },
    /// Guests may act but earn nothing.
    GuestNotEligible,
}

impl Scoring {
    pub fn total(&self) -> u64 {
        match self {
            Scoring::Scored { total, .. } => *total,
            Scoring::GuestNotEligible => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GamificationError {
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("unknown report {0}")]
    UnknownReport(ReportId),
    #[error("report {0} has not been verified")]
    NotVerified(ReportId),
}

impl GamificationError {
    pub fn name(&self) -> &'static str {
        match self {
            GamificationError::UnknownUser(_) => "UnknownUser",
            GamificationError::UnknownReport(_) => "UnknownReport",
            GamificationError::NotVerified(_) => "NotVerified",
        }
    }
}

/// Half-open time window `[start, end)`, or the whole ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Period {
    All,
    Range { start: Timestamp, end: Timestamp },
}

impl Period {
    pub fn contains(&self, ts: Timestamp) -> bool {
        match self {
            Period::All => true,
            Period::Range { start, end } => *start <= ts && ts < *end,
        }
    }

    /// ISO week (Monday 00:00 UTC to the next Monday) containing `ts`.
    pub fn iso_week(ts: Timestamp) -> Period {
        let day = ts.date_naive();
        let monday = day - TimeDelta::days(i64::from(day.weekday().num_days_from_monday()));
        let start = monday.and_time(NaiveTime::MIN).and_utc();
        Period::Range {
            start,
            end: start + TimeDelta::weeks(1),
        }
    }
}

/// One leaderboard row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Standing {
    pub user_id: UserId,
    pub points: u64,
    /// When the user reached `points` within the period.
    pub reached_at: Timestamp,
    pub reached_seq: u64,
}

/// Recompute every user's total from actions alone, ignoring stored points.
pub fn replay_totals(entries: &[LedgerEntry]) -> BTreeMap<UserId, u64> {
    let mut totals = BTreeMap::new();
    for e in entries {
        *totals.entry(e.user_id).or_insert(0) += e.action.points();
    }
    totals
}

impl Tables {
    pub fn ledger(&self) -> &[LedgerEntry] {
        &self.ledger
    }

    pub fn badges(&self) -> &[Badge] {
        &self.badges
    }

    pub fn notifications(&self) -> &[Notification] {
        &self.notifications
    }

    pub fn total_points(&self, user: UserId) -> u64 {
        self.ledger
            .iter()
            .filter(|e| e.user_id == user)
            .map(|e| e.points)
            .sum()
    }

    pub fn badges_of(&self, user: UserId) -> Vec<BadgeKind> {
        self.badges
            .iter()
            .filter(|b| b.user_id == user)
            .map(|b| b.badge)
            .collect()
    }

    pub fn notifications_for(&self, user: UserId) -> Vec<&Notification> {
        self.notifications
            .iter()
            .filter(|n| n.user_id == user)
            .collect()
    }

    fn award(&mut self, user: UserId, badge: BadgeKind, now: Timestamp) -> bool {
        if self
            .badges
            .iter()
            .any(|b| b.user_id == user && b.badge == badge)
        {
            return false;
        }
        self.badges.push(Badge {
            user_id: user,
            badge,
            earned_at: now,
        });
        true
    }

    /// Append a ledger entry and evaluate point badges.
    pub fn record_action(
        &mut self,
        user: UserId,
        action: Action,
        report: Option<ReportId>,
        now: Timestamp,
    ) -> Result<Scoring, GamificationError> {
        let category = self
            .user(user)
            .ok_or(GamificationError::UnknownUser(user))?
            .category;
        if category == UserCategory::Guest {
            return Ok(Scoring::GuestNotEligible);
        }
        self.ledger.push(LedgerEntry {
            seq: self.ledger.len() as u64 + 1,
            user_id: user,
            action,
            points: action.points(),
            at: now,
            report,
        });
        let total = self.total_points(user);
        let mut new_badges = Vec::new();
        for (threshold, badge) in [
            (BRONZE_POINTS, BadgeKind::HelperBronze),
            (SILVER_POINTS, BadgeKind::HelperSilver),
            (GOLD_POINTS, BadgeKind::HelperGold),
        ] {
            if total >= threshold && self.award(user, badge, now) {
                new_badges.push(badge);
            }
        }
        Ok(Scoring::Scored { total, new_badges })
    }

    /// Give `trusted_reporter` to every non-guest with enough confirmed
    /// reports who lacks it. Returns the newly recognised users.
    pub fn award_trusted_reporters(&mut self, now: Timestamp) -> Vec<UserId> {
        let eligible: Vec<UserId> = self
            .users()
            .filter(|u| u.category != UserCategory::Guest && u.confirmed_count >= TRUSTED_REPORTS)
            .map(|u| u.id)
            .collect();
        eligible
            .into_iter()
            .filter(|&u| self.award(u, BadgeKind::TrustedReporter, now))
            .collect()
    }

    /// Users with points in `period`, best first. Ties go to whoever reached
    /// the tied total earlier, then to the lower user id.
    pub fn leaderboard(&self, top_n: usize, period: Period) -> Vec<Standing> {
        let mut standings: BTreeMap<UserId, Standing> = BTreeMap::new();
        for e in self.ledger.iter().filter(|e| period.contains(e.at)) {
            if e.points == 0 {
                continue;
            }
            let s = standings.entry(e.user_id).or_insert(Standing {
                user_id: e.user_id,
                points: 0,
                reached_at: e.at,
                reached_seq: e.seq,
            });
            s.points += e.points;
            s.reached_at = e.at;
            s.reached_seq = e.seq;
        }
        let mut ranked: Vec<Standing> = standings.into_values().collect();
        ranked.sort_by(|a, b| {
            b.points
                .cmp(&a.points)
                .then(a.reached_at.cmp(&b.reached_at))
                .then(a.reached_seq.cmp(&b.reached_seq))
                .then(a.user_id.cmp(&b.user_id))
        });
        ranked.truncate(top_n);
        ranked
    }

    pub fn period_winner(&self, period: Period) -> Option<Standing> {
        self.leaderboard(1, period).into_iter().next()
    }

    /// Record feedback from a route user. Helpful feedback on a verified
    /// report notifies its reporter; unhelpful feedback records nothing.
    pub fn record_feedback(
        &mut self,
        report: ReportId,
        helpful: bool,
        now: Timestamp,
    ) -> Result<Option<Notification>, GamificationError> {
        let r = self
            .report(report)
            .ok_or(GamificationError::UnknownReport(report))?;
        if r.status != ReportStatus::Verified {
            return Err(GamificationError::NotVerified(report));
        }
        if !helpful {
            return Ok(None);
        }
        let reporter = r.reporter;
        self.record_action(reporter, Action::FeedbackHelpful, Some(report), now)?;
        let n = Notification {
            id: self.next_notification_id(),
            user_id: reporter,
            report_id: report,
            at: now,
        };
        self.notifications.push(n.clone());
        Ok(Some(n))
    }

    /// Ledger as audit text, one entry per line.
    pub fn ledger_text(&self) -> String {
        let mut out = String::new();
        for e in &self.ledger {
            let report = e
                .report
                .map_or_else(|| String::from("-"), |r| format!("{r}"));
            out.push_str(&format!(
                "{} {} {} {} {} {}\n",
                e.seq,
                e.user_id,
                e.action,
                e.points,
                format_timestamp(&e.at),
                report
            ));
        }
        out
    }
}
