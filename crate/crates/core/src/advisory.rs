//! Route advisories for visually impaired users.
//!
//! Each area on the requested route gets a severity grade from its verified
//! obstacles and ongoing events, plus the time it was last verified. The
//! renderer turns that into plain sentences, severity first.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use chrono::TimeDelta;
use serde::{Deserialize, Serialize};

use crate::map::SemanticMap;
use crate::protocol::{EventKeyword, ObstacleClass, SemanticLocation};
use crate::store::Tables;
use crate::{format_timestamp, Timestamp};

/// Obstacle total at which an area becomes high severity on its own.
pub const HIGH_OBSTACLES: u64 = 4;

/// Default freshness bound for verified information.
pub fn default_ttl() -> TimeDelta {
    TimeDelta::minutes(30)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Low,
    Middle,
    High,
}

impl Severity {
    pub const fn name(self) -> &'static str {
        match self {
            Severity::Low => "low",
            Severity::Middle => "middle",
            Severity::High => "high",
        }
    }

    fn capitalized(self) -> &'static str {
        match self {
            Severity::Low => "Low",
            Severity::Middle => "Middle",
            Severity::High => "High",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn area_severity(obstacle_total: u64, has_active_event: bool) -> Severity {
    if has_active_event || obstacle_total >= HIGH_OBSTACLES {
        Severity::High
    } else if obstacle_total >= 1 {
        Severity::Middle
    } else {
        Severity::Low
    }
}

/// Verified count of one obstacle class in one area.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObstacleCount {
    pub obstacle_type: ObstacleClass,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AreaAdvisory {
    pub location: SemanticLocation,
    /// Summed per class, in canonical class order.
    pub obstacles: Vec<ObstacleCount>,
    pub active_events: Vec<EventKeyword>,
    pub severity: Severity,
    pub verified_at: Option<Timestamp>,
    pub stale: bool,
}

impl AreaAdvisory {
    pub fn obstacle_total(&self) -> u64 {
        self.obstacles.iter().map(|o| o.count).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Advisory {
    pub route: Vec<SemanticLocation>,
    pub per_area: Vec<AreaAdvisory>,
    pub overall: Severity,
    pub generated_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AdvisoryError {
    #[error("route is empty")]
    EmptyRoute,
    #[error("unknown location {0}")]
    UnknownLocation(SemanticLocation),
}

impl AdvisoryError {
    pub fn name(&self) -> &'static str {
        match self {
            AdvisoryError::EmptyRoute => "EmptyRoute",
            AdvisoryError::UnknownLocation(_) => "UnknownLocation",
        }
    }
}

/// Grade one area from the current verified state.
pub fn area_advisory(
    tables: &Tables,
    location: &SemanticLocation,
    now: Timestamp,
    ttl: TimeDelta,
) -> AreaAdvisory {
    let view = tables.query_verified(location);
    let mut sums: BTreeMap<ObstacleClass, u64> = BTreeMap::new();
    for row in &view.obstacles {
        *sums.entry(row.entry.obstacle_type).or_insert(0) += u64::from(row.entry.count);
    }
    let obstacles: Vec<ObstacleCount> = sums
        .into_iter()
        .map(|(obstacle_type, count)| ObstacleCount {
            obstacle_type,
            count,
        })
        .collect();
    let active_events: Vec<EventKeyword> = view
        .events
        .iter()
        .filter(|e| e.ongoing)
        .map(|e| e.keyword.clone())
        .collect();
    let total = obstacles.iter().map(|o| o.count).sum();
    let stale = match view.verified_at {
        None => true,
        Some(at) => now - at > ttl,
    };
    AreaAdvisory {
        location: location.clone(),
        severity: area_severity(total, !active_events.is_empty()),
        obstacles,
        active_events,
        verified_at: view.verified_at,
        stale,
    }
}

pub fn route_advisory(
    tables: &Tables,
    map: &SemanticMap,
    route: &[SemanticLocation],
    now: Timestamp,
    ttl: TimeDelta,
) -> Result<Advisory, AdvisoryError> {
    if route.is_empty() {
        return Err(AdvisoryError::EmptyRoute);
    }
    if let Some(bad) = route.iter().find(|l| !map.has_area(l)) {
        return Err(AdvisoryError::UnknownLocation(bad.clone()));
    }
    let per_area: Vec<AreaAdvisory> = route
        .iter()
        .map(|l| area_advisory(tables, l, now, ttl))
        .collect();
    let overall = per_area
        .iter()
        .map(|a| a.severity)
        .max()
        .unwrap_or(Severity::Low);
    Ok(Advisory {
        route: route.to_vec(),
        per_area,
        overall,
        generated_at: now,
    })
}

fn obstacle_phrase(o: &ObstacleCount) -> String {
    let name = o.obstacle_type.token().replace('_', " ");
    if o.count == 1 || o.obstacle_type == ObstacleClass::People {
        return format!("{} {}", o.count, name);
    }
    let plural = if name.ends_with("sh") || name.ends_with('s') {
        "es"
    } else if let Some(stem) = name.strip_suffix("shelf") {
        return format!("{} {}shelves", o.count, stem);
    } else {
        "s"
    };
    format!("{} {}{}", o.count, name, plural)
}

fn area_sentence(a: &AreaAdvisory) -> String {
    let mut details: Vec<String> = a
        .active_events
        .iter()
        .map(|k| format!("{} in progress", k.as_str()))
        .collect();
    details.extend(a.obstacles.iter().map(obstacle_phrase));
    let body = if details.is_empty() {
        String::from("no verified obstacles or events")
    } else {
        details.join(", ")
    };
    let when = match (a.stale, a.verified_at) {
        (false, Some(at)) => format!("verified at {}", format_timestamp(&at)),
        (true, Some(at)) => format!("stale, last verified at {}", format_timestamp(&at)),
        (_, None) => String::from("stale, never verified"),
    };
    format!(
        "{} severity at {}: {}; {}.",
        a.severity.capitalized(),
        a.location,
        body,
        when
    )
}

/// One sentence per area in route order, then the overall grade.
pub fn render_advisory(a: &Advisory) -> Vec<String> {
    let mut out: Vec<String> = a.per_area.iter().map(area_sentence).collect();
    out.push(format!("Overall severity: {}.", a.overall));
    out
}
