//! One patrol: mission in, update out.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use chrono::TimeDelta;
use serde::{Deserialize, Serialize};

use crate::map::{CheckpointKind, PlanError, SemanticMap};
use crate::perception::{observe, summarize_obstacles, verify_event, DetectionModel, WorldState};
use crate::protocol::{EventResult, KeywordRegistry, MissionMessage, UpdateMessage};
use crate::{format_timestamp, Timestamp};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Visit {
    pub checkpoint: String,
    /// Cumulative steps from home when the checkpoint was reached.
    pub arrival_step: u32,
    pub detections: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatrolLog {
    pub patrol_id: u64,
    pub mission_revision: u64,
    pub visits: Vec<Visit>,
    pub total_steps: u32,
    pub started_at: Timestamp,
    pub finished_at: Timestamp,
}

impl PatrolLog {
    /// Line-oriented rendering for logs and stdout.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "patrol {} mission_revision={} started_at={}\n",
            self.patrol_id,
            self.mission_revision,
            format_timestamp(&self.started_at)
        );
        for v in &self.visits {
            out.push_str(&format!(
                "visit {} step={} detections={}\n",
                v.checkpoint, v.arrival_step, v.detections
            ));
        }
        out.push_str(&format!(
            "done total_steps={} finished_at={}\n",
            self.total_steps,
            format_timestamp(&self.finished_at)
        ));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PatrolError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("event keyword `{0}` is not registered")]
    UnregisteredKeyword(String),
}

/// Everything the robot carries between patrols.
#[derive(Debug, Clone, Copy)]
pub struct Robot<'a> {
    pub map: &'a SemanticMap,
    pub world: &'a WorldState,
    pub model: &'a DetectionModel,
    pub registry: &'a KeywordRegistry,
    /// Simulated travel time per grid step.
    pub step_duration: TimeDelta,
}

impl Robot<'_> {
    /// Visit every checkpoint the mission needs in greedy tour order, decide
    /// each event at its event checkpoint and refresh obstacles at every
    /// regular checkpoint.
    ///
    /// Event results keep the mission's numbers and order; obstacle rows are
    /// renumbered 1..n in visit order. `patrol_id` keys the perception
    /// streams, so identical inputs give a byte-identical update.
    pub fn run_mission(
        &self,
        mission: &MissionMessage,
        patrol_id: u64,
        mission_revision: u64,
        started_at: Timestamp,
    ) -> Result<(UpdateMessage, PatrolLog), PatrolError> {
        let targets = self.map.mission_checkpoints(mission)?;
        let tour = self.map.plan_patrol(&targets)?;

        let mut results: Vec<Option<bool>> = alloc::vec![None; mission.events().len()];
        let mut obstacles = Vec::new();
        let mut visits = Vec::with_capacity(tour.order.len());
        let mut step = 0;
        for (cp, leg) in tour.order.iter().zip(&tour.legs) {
            step += leg.length();
            let detections = observe(self.world, cp, self.model, patrol_id);
            match cp.kind {
                CheckpointKind::Event => {
                    for (i, ev) in mission.events().iter().enumerate() {
                        if ev.location != cp.observes {
                            continue;
                        }
                        let ongoing = verify_event(&detections, &ev.keyword, self.registry)
                            .map_err(|e| PatrolError::UnregisteredKeyword(e.0.as_str().into()))?;
                        results[i] = Some(ongoing);
                    }
                }
                CheckpointKind::Regular => {
                    let summary = summarize_obstacles(&detections, &cp.observes)
                        .expect("observe only reports the observed area");
                    obstacles.extend(summary);
                }
            }
            visits.push(Visit {
                checkpoint: cp.id.clone(),
                arrival_step: step,
                detections: detections.len(),
            });
        }

        let event_results = mission
            .events()
            .iter()
            .zip(results)
            .map(|(ev, r)| EventResult {
                number: ev.number,
                ongoing: r.expect("every event has an event checkpoint in the tour"),
            })
            .collect();
        let update = UpdateMessage::renumbered(event_results, obstacles)
            .expect("mission event numbers are unique");
        let log = PatrolLog {
            patrol_id,
            mission_revision,
            visits,
            total_steps: tour.total_length,
            started_at,
            finished_at: started_at + self.step_duration * tour.total_length as i32,
        };
        Ok((update, log))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{load_map, DEMO_MAP};
    use crate::protocol::{EventKeyword, EventRequest, ObstacleClass, SemanticLocation};
    use alloc::vec;
    use chrono::DateTime;

    fn loc(s: &str) -> SemanticLocation {
        SemanticLocation::parse(s).unwrap()
    }

    fn t0() -> Timestamp {
        DateTime::from_timestamp(1_750_000_000, 0).unwrap()
    }

    fn elevator_mission() -> MissionMessage {
        MissionMessage::new(
            vec![EventRequest {
                number: 1,
                keyword: EventKeyword::new("elevator_repair").unwrap(),
                location: loc("elevator_1"),
            }],
            vec![],
        )
        .unwrap()
    }

    fn run(world: &WorldState, mission: &MissionMessage) -> (UpdateMessage, PatrolLog) {
        let map = load_map(DEMO_MAP).unwrap();
        let model = DetectionModel::perfect(7);
        let registry = KeywordRegistry::default();
        let robot = Robot {
            map: &map,
            world,
            model: &model,
            registry: &registry,
            step_duration: TimeDelta::seconds(1),
        };
        robot.run_mission(mission, 1, 1, t0()).unwrap()
    }

    #[test]
    fn elevator_sign_confirms_event() {
        let mut world = WorldState::new();
        world.add(ObstacleClass::WarningSignal, loc("elevator_1"));
        let (update, log) = run(&world, &elevator_mission());
        assert!(update.to_text().starts_with("#Event, 1, 1\n"));
        assert!(update
            .to_text()
            .contains("#Obstacle, 1, warning_signal, 1, elevator_1\n"));
        assert_eq!(log.visits.len(), 10);
        assert_eq!(log.total_steps, log.visits.last().unwrap().arrival_step);
        assert_eq!(
            log.finished_at - log.started_at,
            TimeDelta::seconds(i64::from(log.total_steps))
        );
    }

    #[test]
    fn no_sign_refutes_event() {
        let (update, _) = run(&WorldState::new(), &elevator_mission());
        assert_eq!(update.to_text(), "#Event, 1, 0\n");
    }

    #[test]
    fn empty_mission_still_refreshes_obstacles() {
        let mut world = WorldState::new();
        world.add(ObstacleClass::Chair, loc("corridor_5"));
        world.add(ObstacleClass::Chair, loc("corridor_5"));
        world.add(ObstacleClass::Table, loc("corner_1"));
        let (update, log) = run(&world, &MissionMessage::empty());
        assert!(update.event_results().is_empty());
        assert_eq!(update.obstacles().len(), 2);
        assert_eq!(log.visits.len(), 9);
        let numbers: Vec<u32> = update.obstacles().iter().map(|o| o.number).collect();
        assert_eq!(numbers, vec![1, 2]);
    }

    #[test]
    fn rerun_is_identical() {
        let mut world = WorldState::new();
        world.add(ObstacleClass::People, loc("corridor_3"));
        let (a, la) = run(&world, &elevator_mission());
        let (b, lb) = run(&world, &elevator_mission());
        assert_eq!(a.to_text(), b.to_text());
        assert_eq!(la, lb);
    }

    #[test]
    fn log_text_lists_every_visit() {
        let (_, log) = run(&WorldState::new(), &elevator_mission());
        let text = log.to_text();
        assert_eq!(text.lines().filter(|l| l.starts_with("visit ")).count(), 10);
        assert!(text.ends_with('\n'));
    }
}
