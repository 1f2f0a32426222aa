//! Semantic grid maps and the planners that run on them.
//!
//! A map is a 4-connected grid of unit cells. Rectangles of cells are named
//! semantic areas (`corridor_5`, `corner_2`, ...). Each area has at most one
//! *regular* checkpoint from which the robot surveys that area; *event*
//! checkpoints are extra cells placed to look at a particular target, such as
//! the cell facing an elevator door.
//!
//! File format, one directive per line, `#` starts a comment:
//!
//! ```text
//! map <width> <height>
//! wall <x1> <y1> <x2> <y2>
//! area <kind>_<index> <x1> <y1> <x2> <y2>
//! checkpoint <id> regular|event <x> <y> <kind>_<index>
//! home <x> <y>
//! ```
//!
//! Rectangles are inclusive, x grows rightward and y downward from (0, 0).

use alloc::collections::{BTreeMap, BTreeSet, BinaryHeap};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::protocol::{normalize_token, MissionMessage, SemanticLocation};

/// Upper bound on `width * height`, so a hostile header cannot ask for an
/// absurd allocation.
pub const MAX_CELLS: u64 = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: u32,
    pub y: u32,
}

impl Cell {
    pub const fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }

    pub fn manhattan(self, other: Cell) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    /// Surveys the area it stands in for obstacles.
    Regular,
    /// Looks at a specific event target.
    Event,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub id: String,
    pub kind: CheckpointKind,
    pub cell: Cell,
    pub observes: SemanticLocation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticMap {
    width: u32,
    height: u32,
    walkable: Vec<bool>,
    area_of: Vec<Option<usize>>,
    areas: Vec<SemanticLocation>,
    checkpoints: Vec<Checkpoint>,
    home: Cell,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {kind}")]
pub struct MapError {
    pub line: usize,
    pub kind: MapErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MapErrorKind {
    #[error("syntax error: {0}")]
    SyntaxError(String),
    #[error("area {area} overlaps earlier area {earlier} at {cell}")]
    OverlappingAreas {
        area: SemanticLocation,
        earlier: SemanticLocation,
        cell: Cell,
    },
    #[error("rectangle extends past the map edge")]
    RectangleOffMap,
    #[error("checkpoint {0} lies outside the map")]
    CheckpointOffMap(String),
    #[error("checkpoint {0} lies on a wall")]
    CheckpointOnWall(String),
    #[error("area {0} already has a regular checkpoint")]
    DuplicateRegularCheckpoint(SemanticLocation),
    #[error("checkpoint id {0} declared twice")]
    DuplicateCheckpointId(String),
    #[error("checkpoint {id} observes unknown area {area}")]
    UnknownArea { id: String, area: SemanticLocation },
    #[error("regular checkpoint {id} must observe the area containing it")]
    RegularCheckpointOutsideArea { id: String },
    #[error("home cell is missing, off the map or on a wall")]
    BadHome,
}

#[derive(Clone, Copy)]
struct Rect {
    x1: u32,
    y1: u32,
    x2: u32,
    y2: u32,
}

impl Rect {
    fn cells(self) -> impl Iterator<Item = Cell> {
        (self.y1..=self.y2).flat_map(move |y| (self.x1..=self.x2).map(move |x| Cell::new(x, y)))
    }
}

struct Builder {
    width: u32,
    height: u32,
    walkable: Vec<bool>,
    area_of: Vec<Option<usize>>,
    areas: Vec<SemanticLocation>,
    checkpoints: Vec<(usize, Checkpoint)>,
    home: Option<(usize, Cell)>,
}

fn syntax(msg: impl Into<String>) -> MapErrorKind {
    MapErrorKind::SyntaxError(msg.into())
}

fn coord(field: &str) -> Result<u32, MapErrorKind> {
    field
        .parse::<u32>()
        .map_err(|_| syntax(format!("`{field}` is not a coordinate")))
}

fn arity(fields: &[&str], n: usize) -> Result<(), MapErrorKind> {
    if fields.len() != n {
        return Err(syntax(format!(
            "`{}` takes {} arguments, found {}",
            fields[0],
            n - 1,
            fields.len() - 1
        )));
    }
    Ok(())
}

impl Builder {
    fn index(&self, c: Cell) -> usize {
        c.y as usize * self.width as usize + c.x as usize
    }

    fn on_map(&self, c: Cell) -> bool {
        c.x < self.width && c.y < self.height
    }

    fn rect(&self, f: &[&str]) -> Result<Rect, MapErrorKind> {
        let (x1, y1, x2, y2) = (coord(f[0])?, coord(f[1])?, coord(f[2])?, coord(f[3])?);
        if x1 > x2 || y1 > y2 {
            return Err(syntax(
                "rectangle corners must be ordered (x1 <= x2, y1 <= y2)",
            ));
        }
        if !self.on_map(Cell::new(x2, y2)) {
            return Err(MapErrorKind::RectangleOffMap);
        }
        Ok(Rect { x1, y1, x2, y2 })
    }

    fn directive(&mut self, line: usize, fields: &[&str]) -> Result<(), MapErrorKind> {
        match fields[0] {
            "map" => Err(syntax("`map` may only appear once, as the first directive")),
            "wall" => {
                arity(fields, 5)?;
                let r = self.rect(&fields[1..])?;
                for c in r.cells() {
                    let i = self.index(c);
                    self.walkable[i] = false;
                }
                Ok(())
            }
            "area" => {
                arity(fields, 6)?;
                let loc = SemanticLocation::parse(fields[1]).map_err(|e| syntax(e.to_string()))?;
                let r = self.rect(&fields[2..])?;
                let slot = match self.areas.iter().position(|a| *a == loc) {
                    Some(i) => i,
                    None => {
                        self.areas.push(loc.clone());
                        self.areas.len() - 1
                    }
                };
                for c in r.cells() {
                    let i = self.index(c);
                    if let Some(prev) = self.area_of[i] {
                        return Err(MapErrorKind::OverlappingAreas {
                            area: loc,
                            earlier: self.areas[prev].clone(),
                            cell: c,
                        });
                    }
                    self.area_of[i] = Some(slot);
                }
                Ok(())
            }
            "checkpoint" => {
                arity(fields, 6)?;
                let id = normalize_token(fields[1]).map_err(|e| syntax(e.to_string()))?;
                let kind = match fields[2] {
                    "regular" => CheckpointKind::Regular,
                    "event" => CheckpointKind::Event,
                    other => return Err(syntax(format!("checkpoint kind `{other}`"))),
                };
                let cell = Cell::new(coord(fields[3])?, coord(fields[4])?);
                let observes =
                    SemanticLocation::parse(fields[5]).map_err(|e| syntax(e.to_string()))?;
                if !self.on_map(cell) {
                    return Err(MapErrorKind::CheckpointOffMap(id));
                }
                if self.checkpoints.iter().any(|(_, c)| c.id == id) {
                    return Err(MapErrorKind::DuplicateCheckpointId(id));
                }
                self.checkpoints.push((
                    line,
                    Checkpoint {
                        id,
                        kind,
                        cell,
                        observes,
                    },
                ));
                Ok(())
            }
            "home" => {
                arity(fields, 3)?;
                if self.home.is_some() {
                    return Err(syntax("`home` declared twice"));
                }
                let cell = Cell::new(coord(fields[1])?, coord(fields[2])?);
                self.home = Some((line, cell));
                Ok(())
            }
            other => Err(syntax(format!("unknown directive `{other}`"))),
        }
    }

    /// Checks that need the whole file: walls may be declared after the
    /// checkpoints they cover.
    fn finish(mut self, last_line: usize) -> Result<SemanticMap, MapError> {
        for i in 0..self.walkable.len() {
            if !self.walkable[i] {
                self.area_of[i] = None;
            }
        }
        let mut regular_for: BTreeSet<SemanticLocation> = BTreeSet::new();
        for (line, cp) in &self.checkpoints {
            let fail = |kind| MapError { line: *line, kind };
            let i = self.index(cp.cell);
            if !self.walkable[i] {
                return Err(fail(MapErrorKind::CheckpointOnWall(cp.id.clone())));
            }
            if !self.areas.contains(&cp.observes) {
                return Err(fail(MapErrorKind::UnknownArea {
                    id: cp.id.clone(),
                    area: cp.observes.clone(),
                }));
            }
            if cp.kind == CheckpointKind::Regular {
                if self.area_of[i].map(|a| &self.areas[a]) != Some(&cp.observes) {
                    return Err(fail(MapErrorKind::RegularCheckpointOutsideArea {
                        id: cp.id.clone(),
                    }));
                }
                if !regular_for.insert(cp.observes.clone()) {
                    return Err(fail(MapErrorKind::DuplicateRegularCheckpoint(
                        cp.observes.clone(),
                    )));
                }
            }
        }
        let home = match self.home {
            Some((line, cell)) => {
                if !self.on_map(cell) || !self.walkable[self.index(cell)] {
                    return Err(MapError {
                        line,
                        kind: MapErrorKind::BadHome,
                    });
                }
                cell
            }
            None => {
                return Err(MapError {
                    line: last_line,
                    kind: MapErrorKind::BadHome,
                })
            }
        };
        Ok(SemanticMap {
            width: self.width,
            height: self.height,
            walkable: self.walkable,
            area_of: self.area_of,
            areas: self.areas,
            checkpoints: self.checkpoints.into_iter().map(|(_, c)| c).collect(),
            home,
        })
    }
}

/// Parse and validate a map file. Either the whole map is valid or a single
/// line-anchored error comes back.
pub fn load_map(text: &str) -> Result<SemanticMap, MapError> {
    let mut builder: Option<Builder> = None;
    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        last_line = line;
        let content = raw.split('#').next().unwrap_or("");
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let fail = |kind| MapError { line, kind };
        match builder.as_mut() {
            None => {
                if fields[0] != "map" {
                    return Err(fail(syntax(
                        "the first directive must be `map <width> <height>`",
                    )));
                }
                arity(&fields, 3).map_err(fail)?;
                let width = coord(fields[1]).map_err(fail)?;
                let height = coord(fields[2]).map_err(fail)?;
                let cells = u64::from(width) * u64::from(height);
                if cells == 0 || cells > MAX_CELLS {
                    return Err(fail(syntax(format!(
                        "map size {width}x{height} out of range"
                    ))));
                }
                builder = Some(Builder {
                    width,
                    height,
                    walkable: vec![true; cells as usize],
                    area_of: vec![None; cells as usize],
                    areas: Vec::new(),
                    checkpoints: Vec::new(),
                    home: None,
                });
            }
            Some(b) => b.directive(line, &fields).map_err(fail)?,
        }
    }
    match builder {
        Some(b) => b.finish(last_line),
        None => Err(MapError {
            line: last_line,
            kind: syntax("missing `map` directive"),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Path {
    pub cells: Vec<Cell>,
}

impl Path {
    /// Number of steps, one less than the number of cells.
    pub fn length(&self) -> u32 {
        self.cells.len().saturating_sub(1) as u32
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("cell {0} is not a walkable cell of the map")]
    NotWalkable(Cell),
    #[error("no path from {from} to {to}")]
    Unreachable { from: Cell, to: Cell },
    #[error("checkpoint {0} cannot be reached from home")]
    UnreachableCheckpoint(String),
    #[error("no event checkpoint observes {0}")]
    NoEventCheckpoint(SemanticLocation),
}

/// Greedy visiting order with the legs that connect it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tour {
    pub order: Vec<Checkpoint>,
    /// `legs[i]` ends at `order[i]`; `legs[0]` starts at home.
    pub legs: Vec<Path>,
    pub total_length: u32,
}

// Expansion order: up, right, down, left.
const STEPS: [(i64, i64); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];

impl SemanticMap {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn home(&self) -> Cell {
        self.home
    }

    pub fn areas(&self) -> &[SemanticLocation] {
        &self.areas
    }

    pub fn has_area(&self, loc: &SemanticLocation) -> bool {
        self.areas.contains(loc)
    }

    pub fn checkpoints(&self) -> &[Checkpoint] {
        &self.checkpoints
    }

    pub fn checkpoint(&self, id: &str) -> Option<&Checkpoint> {
        self.checkpoints.iter().find(|c| c.id == id)
    }

    pub fn regular_checkpoints(&self) -> impl Iterator<Item = &Checkpoint> {
        self.checkpoints
            .iter()
            .filter(|c| c.kind == CheckpointKind::Regular)
    }

    pub fn event_checkpoints(&self) -> impl Iterator<Item = &Checkpoint> {
        self.checkpoints
            .iter()
            .filter(|c| c.kind == CheckpointKind::Event)
    }

    /// First declared event checkpoint looking at `loc`.
    pub fn event_checkpoint_for(&self, loc: &SemanticLocation) -> Option<&Checkpoint> {
        self.event_checkpoints().find(|c| &c.observes == loc)
    }

    /// Areas whose obstacles every patrol refreshes.
    pub fn covered_areas(&self) -> Vec<SemanticLocation> {
        self.regular_checkpoints()
            .map(|c| c.observes.clone())
            .collect()
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.x < self.width && c.y < self.height
    }

    pub fn is_walkable(&self, c: Cell) -> bool {
        self.contains(c) && self.walkable[self.index(c)]
    }

    pub fn area_at(&self, c: Cell) -> Option<&SemanticLocation> {
        if !self.contains(c) {
            return None;
        }
        self.area_of[self.index(c)].map(|i| &self.areas[i])
    }

    fn index(&self, c: Cell) -> usize {
        c.y as usize * self.width as usize + c.x as usize
    }

    /// Walkable 4-neighbours of `c` in expansion order (up, right, down, left).
    pub fn neighbors(&self, c: Cell) -> impl Iterator<Item = Cell> + '_ {
        STEPS.iter().filter_map(move |(dx, dy)| {
            let x = i64::from(c.x) + dx;
            let y = i64::from(c.y) + dy;
            if x < 0 || y < 0 {
                return None;
            }
            let n = Cell::new(x as u32, y as u32);
            self.is_walkable(n).then_some(n)
        })
    }

    /// Shortest 4-connected path, A* with the Manhattan heuristic.
    ///
    /// Equal-priority nodes are expanded first-in first-out and neighbours are
    /// pushed up, right, down, left, so the returned cell sequence is a pure
    /// function of the inputs.
    pub fn plan_path(&self, from: Cell, to: Cell) -> Result<Path, PlanError> {
        for c in [from, to] {
            if !self.is_walkable(c) {
                return Err(PlanError::NotWalkable(c));
            }
        }
        if from == to {
            return Ok(Path { cells: vec![from] });
        }
        let n = self.walkable.len();
        let mut best = vec![u32::MAX; n];
        let mut parent: Vec<Option<Cell>> = vec![None; n];
        let mut open = BinaryHeap::new();
        let mut seq: u64 = 0;
        best[self.index(from)] = 0;
        open.push(Reverse((from.manhattan(to), seq, from)));
        while let Some(Reverse((f, _, cell))) = open.pop() {
            let g = best[self.index(cell)];
            if f > g + cell.manhattan(to) {
                continue; // superseded entry
            }
            if cell == to {
                let mut cells = vec![to];
                let mut cur = to;
                while let Some(p) = parent[self.index(cur)] {
                    cells.push(p);
                    cur = p;
                }
                cells.reverse();
                return Ok(Path { cells });
            }
            for next in self.neighbors(cell) {
                let i = self.index(next);
                if g + 1 < best[i] {
                    best[i] = g + 1;
                    parent[i] = Some(cell);
                    seq += 1;
                    open.push(Reverse((g + 1 + next.manhattan(to), seq, next)));
                }
            }
        }
        Err(PlanError::Unreachable { from, to })
    }

    /// Greedy nearest-neighbour tour from home; ties go to the smaller id.
    pub fn plan_patrol(&self, targets: &[Checkpoint]) -> Result<Tour, PlanError> {
        for t in targets {
            if self.plan_path(self.home, t.cell).is_err() {
                return Err(PlanError::UnreachableCheckpoint(t.id.clone()));
            }
        }
        let mut remaining: Vec<&Checkpoint> = targets.iter().collect();
        let mut here = self.home;
        let mut tour = Tour {
            order: Vec::with_capacity(targets.len()),
            legs: Vec::with_capacity(targets.len()),
            total_length: 0,
        };
        while !remaining.is_empty() {
            let mut pick: Option<(u32, usize, Path)> = None;
            for (i, cp) in remaining.iter().enumerate() {
                let path = self
                    .plan_path(here, cp.cell)
                    .map_err(|_| PlanError::UnreachableCheckpoint(cp.id.clone()))?;
                let better = match &pick {
                    None => true,
                    Some((len, j, _)) => {
                        (path.length(), cp.id.as_str()) < (*len, remaining[*j].id.as_str())
                    }
                };
                if better {
                    pick = Some((path.length(), i, path));
                }
            }
            let (len, i, path) = pick.expect("remaining is non-empty");
            let cp = remaining.remove(i);
            here = cp.cell;
            tour.total_length += len;
            tour.order.push(cp.clone());
            tour.legs.push(path);
        }
        Ok(tour)
    }

    /// Checkpoints a mission needs: the event checkpoint for each event,
    /// then every regular checkpoint, without duplicates.
    pub fn mission_checkpoints(
        &self,
        mission: &MissionMessage,
    ) -> Result<Vec<Checkpoint>, PlanError> {
        let mut out: Vec<Checkpoint> = Vec::new();
        let mut seen: BTreeMap<&str, ()> = BTreeMap::new();
        for event in mission.events() {
            let cp = self
                .event_checkpoint_for(&event.location)
                .ok_or_else(|| PlanError::NoEventCheckpoint(event.location.clone()))?;
            if seen.insert(cp.id.as_str(), ()).is_none() {
                out.push(cp.clone());
            }
        }
        for cp in self.regular_checkpoints() {
            if seen.insert(cp.id.as_str(), ()).is_none() {
                out.push(cp.clone());
            }
        }
        Ok(out)
    }
}

impl fmt::Display for Checkpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            CheckpointKind::Regular => "regular",
            CheckpointKind::Event => "event",
        };
        write!(
            f,
            "{} {} {} {} {}",
            self.id, kind, self.cell.x, self.cell.y, self.observes
        )
    }
}

/// The built-in demo building: nine semantic areas, each with one regular
/// checkpoint, plus five event checkpoints.
pub const DEMO_MAP: &str = include_str!("demo.map");
