//! Robot side of the channel: wait for a mission, patrol, publish an update.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::TimeDelta;
use patrol_core::patrol::{PatrolLog, Robot};
use patrol_core::protocol::{MISSION_FILE, UPDATE_FILE};
use patrol_core::{
    DetectionModel, KeywordRegistry, MissionMessage, SemanticMap, UpdateMessage, WorldState,
};

use crate::channel::{ChannelError, SyncChannel};
use crate::clock::Clock;

#[derive(Debug, thiserror::Error)]
pub enum DaemonError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Result of one mission cycle.
#[derive(Debug, Clone)]
pub struct Cycle {
    pub mission_revision: u64,
    pub update_revision: u64,
    pub update: UpdateMessage,
    pub log: Option<PatrolLog>,
    /// Why the mission was answered with an empty update, if it was.
    pub error: Option<String>,
}

pub struct Daemon {
    channel: SyncChannel,
    map: SemanticMap,
    model: DetectionModel,
    registry: KeywordRegistry,
    step_duration: TimeDelta,
    clock: Arc<dyn Clock>,
    world: Mutex<WorldState>,
    world_path: Option<PathBuf>,
    handled: AtomicU64,
}

impl Daemon {
    pub fn new(channel: SyncChannel, map: SemanticMap, clock: Arc<dyn Clock>) -> Self {
        Self {
            channel,
            map,
            model: DetectionModel::default(),
            registry: KeywordRegistry::default(),
            step_duration: TimeDelta::seconds(1),
            clock,
            world: Mutex::new(WorldState::new()),
            world_path: None,
            handled: AtomicU64::new(0),
        }
    }

    pub fn with_model(mut self, model: DetectionModel) -> Self {
        self.model = model;
        self
    }

    pub fn with_registry(mut self, registry: KeywordRegistry) -> Self {
        self.registry = registry;
        self
    }

    pub fn with_step(mut self, step: TimeDelta) -> Self {
        self.step_duration = step;
        self
    }

    pub fn with_world(self, world: WorldState) -> Self {
        *self.world.lock().unwrap() = world;
        self
    }

    /// Re-read this world file before every patrol.
    pub fn with_world_file(mut self, path: impl Into<PathBuf>) -> Self {
        self.world_path = Some(path.into());
        self
    }

    pub fn edit_world<R>(&self, f: impl FnOnce(&mut WorldState) -> R) -> R {
        f(&mut self.world.lock().unwrap())
    }

    /// Latest mission revision this daemon has answered.
    pub fn handled_revision(&self) -> u64 {
        self.handled.load(Ordering::SeqCst)
    }

    fn refresh_world(&self) {
        let Some(path) = &self.world_path else {
            return;
        };
        match std::fs::read_to_string(path)
            .map_err(|e| e.to_string())
            .and_then(|text| WorldState::parse(&text).map_err(|e| e.to_string()))
        {
            Ok(world) => *self.world.lock().unwrap() = world,
            Err(e) => tracing::warn!(path = %path.display(), error = %e, "keeping previous world"),
        }
    }

    /// Handle the next unanswered mission, waiting up to `timeout` for one.
    pub fn run_once(&self, timeout: Duration) -> Result<Option<Cycle>, DaemonError> {
        let since = self.handled_revision();
        match self.channel.await_change(MISSION_FILE, since, timeout) {
            Ok(_) => {}
            Err(ChannelError::Timeout { .. }) => return Ok(None),
            Err(e) => return Err(e.into()),
        }
        let file = self.channel.fetch_latest(MISSION_FILE)?;
        self.refresh_world();
        let started_at = self.clock.now();
        let outcome = MissionMessage::parse(&file.content, &self.registry)
            .map_err(|e| format!("mission revision {}: {e}", file.revision))
            .and_then(|mission| {
                let world = self.world.lock().unwrap();
                let robot = Robot {
                    map: &self.map,
                    world: &world,
                    model: &self.model,
                    registry: &self.registry,
                    step_duration: self.step_duration,
                };
                robot
                    .run_mission(&mission, file.revision, file.revision, started_at)
                    .map_err(|e| format!("mission revision {}: {e}", file.revision))
            });
        let (update, log, error, finished_at) = match outcome {
            Ok((update, log)) => {
                self.clock.sleep(log.finished_at - started_at);
                let finished = log.finished_at;
                (update, Some(log), None, finished)
            }
            Err(e) => {
                tracing::error!(error = %e, "answering with an empty update");
                (UpdateMessage::empty(), None, Some(e), started_at)
            }
        };
        let update_revision =
            self.channel
                .publish(UPDATE_FILE, update.to_text().as_bytes(), finished_at)?;
        self.handled.store(file.revision, Ordering::SeqCst);
        if let Some(log) = &log {
            tracing::info!(
                mission = file.revision,
                update = update_revision,
                steps = log.total_steps,
                "patrol complete"
            );
        }
        Ok(Some(Cycle {
            mission_revision: file.revision,
            update_revision,
            update,
            log,
            error,
        }))
    }

    /// Serve missions until `stop` is raised. Missions that arrive during a
    /// patrol are picked up by the next cycle.
    pub fn run(&self, stop: &AtomicBool, poll: Duration) -> Result<(), DaemonError> {
        while !stop.load(Ordering::SeqCst) {
            if let Some(cycle) = self.run_once(poll)? {
                if let Some(log) = &cycle.log {
                    print!("{}", log.to_text());
                }
            }
        }
        Ok(())
    }
}
