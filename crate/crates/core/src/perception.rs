//! Simulated robot vision.
//!
//! The world is a list of ground-truth objects placed in semantic areas. An
//! observation from a checkpoint sees every object in the area the checkpoint
//! looks at, each independently with probability `p_tp` for its class, plus
//! a Poisson number of spurious detections per class with mean `lambda_fp`.
//! Every observation draws from its own ChaCha stream keyed by
//! `(seed, checkpoint id, patrol id)`, so a patrol can be replayed exactly and
//! the order in which checkpoints are visited does not matter.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::map::Checkpoint;
use crate::protocol::{
    normalize_token, EventKeyword, KeywordRegistry, ObstacleClass, ObstacleEntry, SemanticLocation,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldObject {
    pub id: u32,
    pub class: ObstacleClass,
    pub location: SemanticLocation,
}

/// Ground truth: what is really standing where.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorldState {
    objects: Vec<WorldObject>,
    next_id: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct WorldError {
    pub line: usize,
    pub message: String,
}

impl Default for WorldState {
    fn default() -> Self {
        Self::new()
    }
}

impl WorldState {
    pub fn new() -> Self {
        Self {
            objects: Vec::new(),
            next_id: 1,
        }
    }

    /// Parse a world file: `object <class> <kind>_<index>` per line, `#`
    /// comments. Ids are assigned 1.. in file order.
    pub fn parse(text: &str) -> Result<Self, WorldError> {
        let mut world = Self::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("");
            let fields: Vec<&str> = content.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            let fail = |message: String| WorldError { line, message };
            if fields[0] != "object" || fields.len() != 3 {
                return Err(fail("expected `object <class> <kind>_<index>`".into()));
            }
            let class = normalize_token(fields[1])
                .ok()
                .and_then(|t| ObstacleClass::from_token(&t))
                .ok_or_else(|| fail(format!("unknown obstacle class `{}`", fields[1])))?;
            let location = SemanticLocation::parse(fields[2]).map_err(|e| fail(e.to_string()))?;
            world.add(class, location);
        }
        Ok(world)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for o in &self.objects {
            out.push_str(&format!("object {} {}\n", o.class, o.location));
        }
        out
    }

    pub fn add(&mut self, class: ObstacleClass, location: SemanticLocation) -> u32 {
        let id = self.next_id.max(1);
        self.next_id = id + 1;
        self.objects.push(WorldObject {
            id,
            class,
            location,
        });
        id
    }

    /// Removes the first object of `class` at `location`; `false` if none.
    pub fn remove(&mut self, class: ObstacleClass, location: &SemanticLocation) -> bool {
        match self
            .objects
            .iter()
            .position(|o| o.class == class && &o.location == location)
        {
            Some(i) => {
                self.objects.remove(i);
                true
            }
            None => false,
        }
    }

    pub fn objects(&self) -> &[WorldObject] {
        &self.objects
    }

    pub fn objects_at<'a>(
        &'a self,
        location: &'a SemanticLocation,
    ) -> impl Iterator<Item = &'a WorldObject> + 'a {
        self.objects.iter().filter(move |o| &o.location == location)
    }
}

/// Largest accepted mean of spurious detections per class and observation.
pub const MAX_LAMBDA_FP: f64 = 1000.0;

/// Per-class detection rates plus the seed of every observation stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionModel {
    p_tp: [f64; ObstacleClass::COUNT],
    lambda_fp: [f64; ObstacleClass::COUNT],
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("true-positive rate {0} outside [0, 1]")]
    RateOutOfRange(f64),
    #[error("false-positive mean {0} must lie in [0, 1000]")]
    LambdaOutOfRange(f64),
    #[error("line {line}: {message}")]
    Config { line: usize, message: String },
}

impl Default for DetectionModel {
    fn default() -> Self {
        Self::perfect(0)
    }
}

impl DetectionModel {
    /// Sees everything, invents nothing.
    pub fn perfect(seed: u64) -> Self {
        Self {
            p_tp: [1.0; ObstacleClass::COUNT],
            lambda_fp: [0.0; ObstacleClass::COUNT],
            seed,
        }
    }

    pub fn p_tp(&self, class: ObstacleClass) -> f64 {
        self.p_tp[class.index()]
    }

    pub fn lambda_fp(&self, class: ObstacleClass) -> f64 {
        self.lambda_fp[class.index()]
    }

    pub fn set_p_tp(&mut self, class: ObstacleClass, p: f64) -> Result<(), ModelError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(ModelError::RateOutOfRange(p));
        }
        self.p_tp[class.index()] = p;
        Ok(())
    }

    pub fn set_lambda_fp(&mut self, class: ObstacleClass, lambda: f64) -> Result<(), ModelError> {
        if !(0.0..=MAX_LAMBDA_FP).contains(&lambda) {
            return Err(ModelError::LambdaOutOfRange(lambda));
        }
        self.lambda_fp[class.index()] = lambda;
        Ok(())
    }

    /// Read `key = value` lines: `seed`, `p_tp.<class>`, `lambda_fp.<class>`.
    /// `*` in place of a class sets every class. Unlisted keys keep the
    /// perfect-model defaults.
    pub fn from_config(text: &str) -> Result<Self, ModelError> {
        let mut model = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let fail = |message: String| ModelError::Config { line, message };
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| fail("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            if key == "seed" {
                model.seed = value
                    .parse()
                    .map_err(|_| fail(format!("seed `{value}` is not an integer")))?;
                continue;
            }
            let (param, class) = key
                .split_once('.')
                .ok_or_else(|| fail(format!("unknown key `{key}`")))?;
            let classes: Vec<ObstacleClass> = if class == "*" {
                ObstacleClass::ALL.to_vec()
            } else {
                let c = ObstacleClass::from_token(class)
                    .ok_or_else(|| fail(format!("unknown obstacle class `{class}`")))?;
                alloc::vec![c]
            };
            let number: f64 = value
                .parse()
                .map_err(|_| fail(format!("`{value}` is not a number")))?;
            for c in classes {
                let res = match param {
                    "p_tp" => model.set_p_tp(c, number),
                    "lambda_fp" => model.set_lambda_fp(c, number),
                    _ => return Err(fail(format!("unknown key `{key}`"))),
                };
                res.map_err(|e| fail(e.to_string()))?;
            }
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    pub class: ObstacleClass,
    pub location: SemanticLocation,
    /// Ground-truth object behind the detection; `None` when spurious.
    pub truth: Option<u32>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn observation_rng(seed: u64, checkpoint_id: &str, patrol_id: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&patrol_id.to_le_bytes());
    key[16..24].copy_from_slice(&fnv1a(checkpoint_id.as_bytes()).to_le_bytes());
    key[24..].copy_from_slice(b"observe\0");
    ChaCha8Rng::from_seed(key)
}

/// One look from `checkpoint` during patrol `patrol_id`.
pub fn observe(
    world: &WorldState,
    checkpoint: &Checkpoint,
    model: &DetectionModel,
    patrol_id: u64,
) -> Vec<Detection> {
    let mut rng = observation_rng(model.seed, &checkpoint.id, patrol_id);
    let mut out = Vec::new();
    for obj in world.objects_at(&checkpoint.observes) {
        if rng.random_bool(model.p_tp(obj.class)) {
            out.push(Detection {
                class: obj.class,
                location: checkpoint.observes.clone(),
                truth: Some(obj.id),
            });
        }
    }
    for class in ObstacleClass::ALL {
        let lambda = model.lambda_fp(class);
        if lambda <= 0.0 {
            continue;
        }
        let spurious: f64 = Poisson::new(lambda)
            .expect("lambda validated positive and finite")
            .sample(&mut rng);
        for _ in 0..spurious as u64 {
            out.push(Detection {
                class,
                location: checkpoint.observes.clone(),
                truth: None,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("event keyword `{0}` is not registered")]
pub struct UnregisteredKeyword(pub EventKeyword);

/// Decide whether an event is still going on from what was detected.
///
/// `class_waiting` needs more than two people; `elevator_repair` needs at
/// least one warning sign; other keywords use their registered rule.
pub fn verify_event(
    detections: &[Detection],
    keyword: &EventKeyword,
    registry: &KeywordRegistry,
) -> Result<bool, UnregisteredKeyword> {
    let rule = registry
        .rule(keyword)
        .ok_or_else(|| UnregisteredKeyword(keyword.clone()))?;
    let seen = detections.iter().filter(|d| d.class == rule.class).count();
    Ok(seen as u64 >= u64::from(rule.min_count))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("detection at {found} while summarizing {expected}")]
pub struct MixedLocations {
    pub expected: SemanticLocation,
    pub found: SemanticLocation,
}

/// Count detections per class, one entry per class present, canonical class
/// order, numbered 1.. locally (the patrol renumbers globally).
pub fn summarize_obstacles(
    detections: &[Detection],
    location: &SemanticLocation,
) -> Result<Vec<ObstacleEntry>, MixedLocations> {
    let mut counts = [0u32; ObstacleClass::COUNT];
    for d in detections {
        if &d.location != location {
            return Err(MixedLocations {
                expected: location.clone(),
                found: d.location.clone(),
            });
        }
        counts[d.class.index()] += 1;
    }
    Ok(ObstacleClass::ALL
        .iter()
        .filter(|c| counts[c.index()] > 0)
        .enumerate()
        .map(|(i, c)| ObstacleEntry {
            number: i as u32 + 1,
            obstacle_type: *c,
            count: counts[c.index()],
            location: location.clone(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{Cell, CheckpointKind};
    use alloc::vec;

    fn loc(s: &str) -> SemanticLocation {
        SemanticLocation::parse(s).unwrap()
    }

    fn checkpoint(observes: &str) -> Checkpoint {
        Checkpoint {
            id: "e1".into(),
            kind: CheckpointKind::Event,
            cell: Cell::new(0, 0),
            observes: loc(observes),
        }
    }

    fn det(class: ObstacleClass, at: &str) -> Detection {
        Detection {
            class,
            location: loc(at),
            truth: None,
        }
    }

    fn people(n: usize) -> Vec<Detection> {
        (0..n)
            .map(|_| det(ObstacleClass::People, "corner_2"))
            .collect()
    }

    #[test]
    fn perfect_model_sees_exactly_the_area() {
        let mut world = WorldState::new();
        for _ in 0..3 {
            world.add(ObstacleClass::People, loc("elevator_1"));
        }
        world.add(ObstacleClass::Chair, loc("corridor_5"));
        let d = observe(
            &world,
            &checkpoint("elevator_1"),
            &DetectionModel::perfect(7),
            1,
        );
        assert_eq!(d.len(), 3);
        assert!(d
            .iter()
            .all(|d| d.class == ObstacleClass::People && d.truth.is_some()));
    }

    #[test]
    fn blind_model_sees_nothing_real() {
        let mut world = WorldState::new();
        world.add(ObstacleClass::Door, loc("corner_1"));
        let mut model = DetectionModel::perfect(1);
        for c in ObstacleClass::ALL {
            model.set_p_tp(c, 0.0).unwrap();
        }
        assert!(observe(&world, &checkpoint("corner_1"), &model, 3).is_empty());
    }

    #[test]
    fn observation_is_reproducible_and_stream_keyed() {
        let mut world = WorldState::new();
        for _ in 0..20 {
            world.add(ObstacleClass::Chair, loc("corner_1"));
        }
        let mut model = DetectionModel::perfect(42);
        model.set_p_tp(ObstacleClass::Chair, 0.5).unwrap();
        model.set_lambda_fp(ObstacleClass::Door, 2.0).unwrap();
        let cp = checkpoint("corner_1");
        let a = observe(&world, &cp, &model, 5);
        assert_eq!(a, observe(&world, &cp, &model, 5));
        let others: Vec<_> = (6..10).map(|p| observe(&world, &cp, &model, p)).collect();
        assert!(others.iter().any(|o| *o != a));
    }

    #[test]
    fn class_waiting_boundary() {
        let reg = KeywordRegistry::default();
        let kw = EventKeyword::new("class_waiting").unwrap();
        assert!(verify_event(&people(3), &kw, &reg).unwrap());
        assert!(!verify_event(&people(2), &kw, &reg).unwrap());
    }

    #[test]
    fn elevator_repair_needs_a_sign() {
        let reg = KeywordRegistry::default();
        let kw = EventKeyword::new("elevator_repair").unwrap();
        let sign = vec![det(ObstacleClass::WarningSignal, "elevator_1")];
        assert!(verify_event(&sign, &kw, &reg).unwrap());
        assert!(!verify_event(&people(5), &kw, &reg).unwrap());
        let unknown = EventKeyword::new("fire_drill").unwrap();
        assert_eq!(
            verify_event(&sign, &unknown, &reg),
            Err(UnregisteredKeyword(unknown.clone()))
        );
    }

    #[test]
    fn summary_groups_in_canonical_order() {
        let ds = vec![
            det(ObstacleClass::Chair, "corridor_5"),
            det(ObstacleClass::Chair, "corridor_5"),
            det(ObstacleClass::Table, "corridor_5"),
        ];
        let s = summarize_obstacles(&ds, &loc("corridor_5")).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].obstacle_type, s[0].count), (ObstacleClass::Table, 1));
        assert_eq!((s[1].obstacle_type, s[1].count), (ObstacleClass::Chair, 2));
        assert!(summarize_obstacles(&[], &loc("corridor_5"))
            .unwrap()
            .is_empty());

        let all: Vec<Detection> = ObstacleClass::ALL
            .iter()
            .map(|c| det(*c, "corner_1"))
            .collect();
        let s = summarize_obstacles(&all, &loc("corner_1")).unwrap();
        assert_eq!(
            s.iter().map(|e| e.obstacle_type).collect::<Vec<_>>(),
            ObstacleClass::ALL.to_vec()
        );
    }

    #[test]
    fn summary_rejects_mixed_locations() {
        let ds = vec![
            det(ObstacleClass::Chair, "corridor_5"),
            det(ObstacleClass::Chair, "corner_1"),
        ];
        assert!(summarize_obstacles(&ds, &loc("corridor_5")).is_err());
    }

    #[test]
    fn world_file_round_trip() {
        let text = "# sign in front of the lift\nobject warning_signal elevator_1\nobject Trash_Can corridor_5\n";
        let w = WorldState::parse(text).unwrap();
        assert_eq!(w.objects().len(), 2);
        assert_eq!(w.objects()[1].class, ObstacleClass::TrashCan);
        assert_eq!(WorldState::parse(&w.to_text()).unwrap(), w);
        assert_eq!(
            WorldState::parse("object stove corner_1").unwrap_err().line,
            1
        );
        assert_eq!(
            WorldState::parse("\nthing chair corner_1")
                .unwrap_err()
                .line,
            2
        );
    }

    #[test]
    fn world_remove() {
        let mut w = WorldState::new();
        w.add(ObstacleClass::WarningSignal, loc("elevator_1"));
        assert!(w.remove(ObstacleClass::WarningSignal, &loc("elevator_1")));
        assert!(!w.remove(ObstacleClass::WarningSignal, &loc("elevator_1")));
    }

    #[test]
    fn model_config() {
        let m = DetectionModel::from_config(
            "seed = 9\np_tp.* = 0.8\np_tp.people = 0.5\nlambda_fp.chair = 0.25\n",
        )
        .unwrap();
        assert_eq!(m.seed, 9);
        assert_eq!(m.p_tp(ObstacleClass::Door), 0.8);
        assert_eq!(m.p_tp(ObstacleClass::People), 0.5);
        assert_eq!(m.lambda_fp(ObstacleClass::Chair), 0.25);
        assert!(DetectionModel::from_config("p_tp.chair = 1.5").is_err());
        assert!(DetectionModel::from_config("lambda_fp.chair = -1").is_err());
        assert!(DetectionModel::from_config("p_tp.stove = 1").is_err());
        assert!(DetectionModel::from_config("gain = 2").is_err());
    }
}
