//! Pure core of the patrol pipeline.
//!
//! Crowd members report indoor obstacles and events, a patrol robot checks
//! them from checkpoints on a semantic grid map, and verified, severity-graded
//! advisories come back out for visually impaired users. Everything in this
//! crate is deterministic and free of IO: the std companion crate (`patrol`)
//! owns files, clocks, sockets and the command line.
//!
//! Module map:
//!
//! - [`protocol`]: Mission Message / Update text grammar and token normalization.
//! - [`map`]: semantic grid maps, checkpoints, shortest paths and patrol tours.
//! - [`perception`]: ground-truth world, seeded detection model, event rules.
//! - [`patrol`]: one complete patrol turning a mission into an update.
//! - [`store`]: the logical tables and the report lifecycle.
//! - [`gamification`]: points ledger, badges, leaderboard, feedback.
//! - [`advisory`]: per-area severity grading and sentence rendering.
#![no_std]

extern crate alloc;

pub mod advisory;
pub mod gamification;
pub mod map;
pub mod patrol;
pub mod perception;
pub mod protocol;
pub mod store;

/// UTC instant used for every timestamp in the pipeline.
pub type Timestamp = chrono::DateTime<chrono::Utc>;

/// ISO-8601 rendering used in files and advisories (second precision, `Z`).
pub fn format_timestamp(ts: &Timestamp) -> alloc::string::String {
    ts.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

pub use advisory::{Advisory, AreaAdvisory, Severity};
pub use map::{Cell, Checkpoint, CheckpointKind, Path, SemanticMap};
pub use perception::{Detection, DetectionModel, WorldState};
pub use protocol::{
    EventKeyword, EventRequest, EventResult, KeywordRegistry, MissionMessage, ObstacleClass,
    ObstacleEntry, SemanticLocation, UpdateMessage,
};
