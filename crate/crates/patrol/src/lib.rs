//! IO side of the patrol pipeline.
//!
//! - [`channel`]: directory-backed file-drop channel with revisions.
//! - [`datastore`]: JSON Lines database with atomic commits.
//! - [`daemon`]: the robot loop answering missions with updates.
//! - [`service`]: sessions, reports, dispatch, sync, advisories, incentives.
//! - [`api`]: HTTP routes over the service.
//! - [`scenario`]: scripted end-to-end runs on simulated time.

pub mod api;
pub mod channel;
pub mod clock;
pub mod daemon;
pub mod datastore;
pub mod scenario;
pub mod service;

pub use patrol_core as core;
