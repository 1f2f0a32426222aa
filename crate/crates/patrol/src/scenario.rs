//! Line-oriented scenario scripts run against an in-process pipeline.
//!
//! Configuration directives must come before the first action:
//!
//! ```text
//! map <file>          world <file>        model <file>
//! seed <n>            clock <ISO-8601>    step <seconds>
//! ```
//!
//! Actions:
//!
//! ```text
//! login <alias> [maintenance]      guest <alias>        begin <alias>
//! report <alias|-> obstacle <class> <count> <location>
//! report <alias|-> event <keyword> <location>
//! dispatch                         patrol               advance <seconds>
//! world-add <class> <location>     world-remove <class> <location>
//! advise <loc,loc,...>             feedback <report|last> helpful|unhelpful
//! leaderboard [n]
//! ```
//!
//! Assertions stop the run at the first failure:
//!
//! ```text
//! assert overall <severity>            assert area <location> <severity>
//! assert stale <location> yes|no       assert timestamp <location> last-patrol
//! assert update-contains <text>        assert report <id|last> <status>
//! assert event <keyword> <location> ongoing|ended|none
//! assert points <alias> <n>
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. File paths are
//! relative to the script's directory.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, TimeDelta};
use patrol_core::gamification::Period;
use patrol_core::map::{load_map, DEMO_MAP};
use patrol_core::store::{ReportId, ReportStatus, UserCategory};
use patrol_core::{
    format_timestamp, Advisory, DetectionModel, EventKeyword, ObstacleClass, SemanticLocation,
    SemanticMap, Severity, Timestamp, WorldState,
};

use crate::channel::SyncChannel;
use crate::clock::ManualClock;
use crate::daemon::Daemon;
use crate::datastore::Datastore;
use crate::service::{PatrolService, ReportRequest};

pub const DEFAULT_START: &str = "2025-01-06T09:00:00Z";

#[derive(Debug, Clone, Default)]
pub struct ScenarioOptions {
    /// Directory that relative paths in the script resolve against.
    pub base_dir: PathBuf,
    /// Overrides the script's `map` directive.
    pub map: Option<PathBuf>,
    /// Overrides the script's `world` directive.
    pub world: Option<PathBuf>,
    /// Keep channel files here instead of a temporary directory.
    pub channel: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScenarioRun {
    pub transcript: Vec<String>,
    /// Every Update.txt the robot published, in order.
    pub updates: Vec<String>,
    /// Rendered sentences of every `advise`, in order.
    pub advisories: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScenarioErrorKind {
    Syntax(String),
    AssertFailed(String),
    Runtime(String),
}

impl fmt::Display for ScenarioErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioErrorKind::Syntax(m) => write!(f, "syntax error: {m}"),
            ScenarioErrorKind::AssertFailed(m) => write!(f, "assertion failed: {m}"),
            ScenarioErrorKind::Runtime(m) => write!(f, "{m}"),
        }
    }
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("line {line}: {kind}")]
pub struct ScenarioError {
    pub line: usize,
    pub kind: ScenarioErrorKind,
    /// Output produced before the failure.
    pub run: ScenarioRun,
}

fn syntax(m: impl Into<String>) -> ScenarioErrorKind {
    ScenarioErrorKind::Syntax(m.into())
}

fn runtime(m: impl fmt::Display) -> ScenarioErrorKind {
    ScenarioErrorKind::Runtime(m.to_string())
}

fn failed(m: impl Into<String>) -> ScenarioErrorKind {
    ScenarioErrorKind::AssertFailed(m.into())
}

struct Config {
    map: Option<PathBuf>,
    world: Option<PathBuf>,
    model: Option<PathBuf>,
    seed: u64,
    start: Timestamp,
    step: TimeDelta,
}

struct Actor {
    token: String,
    user_id: u64,
    draft: Option<String>,
}

struct Engine {
    clock: Arc<ManualClock>,
    service: PatrolService,
    daemon: Daemon,
    _tempdir: Option<tempfile::TempDir>,
    actors: HashMap<String, Actor>,
    last_report: Option<ReportId>,
    last_update: Option<String>,
    last_advisory: Option<Advisory>,
    last_patrol_at: Option<Timestamp>,
}

fn parse_severity(s: &str) -> Result<Severity, ScenarioErrorKind> {
    match s {
        "low" => Ok(Severity::Low),
        "middle" => Ok(Severity::Middle),
        "high" => Ok(Severity::High),
        _ => Err(syntax(format!("unknown severity `{s}`"))),
    }
}

fn parse_status(s: &str) -> Result<ReportStatus, ScenarioErrorKind> {
    match s {
        "pending" => Ok(ReportStatus::Pending),
        "dispatched" => Ok(ReportStatus::Dispatched),
        "verified" => Ok(ReportStatus::Verified),
        "refuted" => Ok(ReportStatus::Refuted),
        _ => Err(syntax(format!("unknown report status `{s}`"))),
    }
}

fn parse_loc(s: &str) -> Result<SemanticLocation, ScenarioErrorKind> {
    SemanticLocation::parse_lenient(s).map_err(|e| syntax(e.to_string()))
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, ScenarioErrorKind> {
    s.parse().map_err(|_| syntax(format!("bad {what} `{s}`")))
}

fn arity(args: &[&str], n: usize, usage: &str) -> Result<(), ScenarioErrorKind> {
    if args.len() == n {
        Ok(())
    } else {
        Err(syntax(format!("usage: {usage}")))
    }
}

impl Engine {
    fn start(cfg: &Config, opts: &ScenarioOptions) -> Result<Self, ScenarioErrorKind> {
        let resolve = |p: &Path| opts.base_dir.join(p);
        let map: SemanticMap = match opts.map.clone().or_else(|| cfg.map.as_deref().map(resolve)) {
            Some(path) => {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| runtime(format!("{}: {e}", path.display())))?;
                load_map(&text).map_err(|e| runtime(format!("{}: {e}", path.display())))?
            }
            None => load_map(DEMO_MAP).expect("demo map is valid"),
        };
        let world = match opts
            .world
            .clone()
            .or_else(|| cfg.world.as_deref().map(resolve))
        {
            Some(path) => {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| runtime(format!("{}: {e}", path.display())))?;
                WorldState::parse(&text).map_err(|e| runtime(format!("{}: {e}", path.display())))?
            }
            None => WorldState::new(),
        };
        let mut model = match cfg.model.as_deref().map(resolve) {
            Some(path) => {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| runtime(format!("{}: {e}", path.display())))?;
                DetectionModel::from_config(&text)
                    .map_err(|e| runtime(format!("{}: {e}", path.display())))?
            }
            None => DetectionModel::perfect(cfg.seed),
        };
        model.seed = cfg.seed;
        let (tempdir, dir) = match &opts.channel {
            Some(d) => (None, d.clone()),
            None => {
                let t = tempfile::tempdir().map_err(runtime)?;
                let d = t.path().to_path_buf();
                (Some(t), d)
            }
        };
        let channel = SyncChannel::create(&dir).map_err(runtime)?;
        let clock = Arc::new(ManualClock::new(cfg.start));
        let service = PatrolService::new(
            Datastore::in_memory(),
            channel.clone(),
            map.clone(),
            clock.clone(),
        );
        let daemon = Daemon::new(channel, map, clock.clone())
            .with_model(model)
            .with_world(world)
            .with_step(cfg.step);
        Ok(Self {
            clock,
            service,
            daemon,
            _tempdir: tempdir,
            actors: HashMap::new(),
            last_report: None,
            last_update: None,
            last_advisory: None,
            last_patrol_at: None,
        })
    }

    fn actor(&self, alias: &str) -> Result<&Actor, ScenarioErrorKind> {
        self.actors
            .get(alias)
            .ok_or_else(|| runtime(format!("unknown actor `{alias}`")))
    }

    fn report_ref(&self, s: &str) -> Result<ReportId, ScenarioErrorKind> {
        if s == "last" {
            self.last_report
                .ok_or_else(|| runtime("no report has been submitted yet"))
        } else {
            parse_num(s, "report id")
        }
    }

    fn advisory(&self) -> Result<&Advisory, ScenarioErrorKind> {
        self.last_advisory
            .as_ref()
            .ok_or_else(|| runtime("no advisory requested yet"))
    }

    fn area(&self, loc: &str) -> Result<&patrol_core::AreaAdvisory, ScenarioErrorKind> {
        let loc = parse_loc(loc)?;
        self.advisory()?
            .per_area
            .iter()
            .find(|a| a.location == loc)
            .ok_or_else(|| runtime(format!("{loc} is not on the advised route")))
    }

    fn exec(
        &mut self,
        cmd: &str,
        args: &[&str],
        rest: &str,
        run: &mut ScenarioRun,
    ) -> Result<(), ScenarioErrorKind> {
        let out = &mut run.transcript;
        match cmd {
            "login" => {
                let category = match args {
                    [_] => UserCategory::Registered,
                    [_, "maintenance"] => UserCategory::Maintenance,
                    _ => return Err(syntax("usage: login <alias> [maintenance]")),
                };
                let o = self.service.login(args[0], category).map_err(runtime)?;
                out.push(format!(
                    "login {} -> user {}, points {}",
                    args[0], o.user_id, o.points
                ));
                self.actors.insert(
                    args[0].to_string(),
                    Actor {
                        token: o.token,
                        user_id: o.user_id,
                        draft: None,
                    },
                );
            }
            "guest" => {
                arity(args, 1, "guest <alias>")?;
                let o = self.service.guest().map_err(runtime)?;
                out.push(format!("guest {} -> user {}", args[0], o.user_id));
                self.actors.insert(
                    args[0].to_string(),
                    Actor {
                        token: o.token,
                        user_id: o.user_id,
                        draft: None,
                    },
                );
            }
            "begin" => {
                arity(args, 1, "begin <alias>")?;
                let token = self.actor(args[0])?.token.clone();
                let o = self.service.begin_report(&token).map_err(runtime)?;
                out.push(format!("begin {} -> points {}", args[0], o.points));
                self.actors.get_mut(args[0]).expect("checked").draft = Some(o.draft_id);
            }
            "report" => {
                let req = match args {
                    [_, "obstacle", class, count, loc] => ReportRequest::Obstacle {
                        class: class.to_string(),
                        count: parse_num(count, "count")?,
                        location: loc.to_string(),
                    },
                    [_, "event", keyword, loc] => ReportRequest::Event {
                        keyword: keyword.to_string(),
                        location: loc.to_string(),
                    },
                    _ => {
                        return Err(syntax(
                            "usage: report <alias|-> obstacle <class> <count> <location> | report <alias|-> event <keyword> <location>",
                        ))
                    }
                };
                let (token, draft) = if args[0] == "-" {
                    (None, None)
                } else {
                    let a = self.actor(args[0])?;
                    (Some(a.token.clone()), a.draft.clone())
                };
                let o = self
                    .service
                    .submit_report(token.as_deref(), draft.as_deref(), &req)
                    .map_err(runtime)?;
                if let Some(a) = self.actors.get_mut(args[0]) {
                    a.draft = None;
                }
                self.last_report = Some(o.report_id);
                let points = if o.eligible {
                    format!("points {}", o.points)
                } else {
                    String::from("guest, unscored")
                };
                out.push(format!(
                    "report {} by {} -> pending, {points}",
                    o.report_id, args[0]
                ));
            }
            "dispatch" => {
                arity(args, 0, "dispatch")?;
                let o = self.service.dispatch().map_err(runtime)?;
                out.push(format!(
                    "dispatch -> mission {} revision {}: {} event(s), {} obstacle(s)",
                    o.mission_id, o.mission_revision, o.events, o.obstacles
                ));
                out.extend(o.text.lines().map(|l| format!("  {l}")));
            }
            "patrol" => {
                arity(args, 0, "patrol")?;
                let cycle = self
                    .daemon
                    .run_once(Duration::ZERO)
                    .map_err(runtime)?
                    .ok_or_else(|| runtime("no unanswered mission to patrol"))?;
                if let Some(e) = &cycle.error {
                    return Err(runtime(format!("patrol failed: {e}")));
                }
                let log = cycle.log.expect("successful cycle has a log");
                let text = cycle.update.to_text();
                out.push(format!(
                    "patrol -> update revision {}, {} checkpoints, {} steps, finished {}",
                    cycle.update_revision,
                    log.visits.len(),
                    log.total_steps,
                    format_timestamp(&log.finished_at)
                ));
                out.extend(text.lines().map(|l| format!("  {l}")));
                self.last_patrol_at = Some(log.finished_at);
                run.updates.push(text.clone());
                self.last_update = Some(text);
                let synced = self
                    .service
                    .sync_updates()
                    .map_err(runtime)?
                    .ok_or_else(|| runtime("update was not applied"))?;
                run.transcript.push(format!(
                    "sync -> mission {}: {} report(s) verified, {} refuted",
                    synced.mission_id,
                    synced.counts.reports_verified.len(),
                    synced.counts.reports_refuted.len()
                ));
            }
            "advance" => {
                arity(args, 1, "advance <seconds>")?;
                let secs: i64 = parse_num(args[0], "seconds")?;
                self.clock.advance(TimeDelta::seconds(secs));
                out.push(format!(
                    "advance -> {}",
                    format_timestamp(&self.clock_now())
                ));
            }
            "world-add" | "world-remove" => {
                arity(args, 2, &format!("{cmd} <class> <location>"))?;
                let class: ObstacleClass = args[0]
                    .parse()
                    .map_err(|_| syntax(format!("unknown obstacle class `{}`", args[0])))?;
                let loc = parse_loc(args[1])?;
                if cmd == "world-add" {
                    self.daemon.edit_world(|w| w.add(class, loc.clone()));
                } else if !self.daemon.edit_world(|w| w.remove(class, &loc)) {
                    return Err(runtime(format!("no {class} at {loc} to remove")));
                }
                out.push(format!("{cmd} {class} {loc}"));
            }
            "advise" => {
                arity(args, 1, "advise <loc,loc,...>")?;
                let o = self.service.advisory(args[0], None).map_err(runtime)?;
                out.push(format!("advise {}", args[0]));
                out.extend(o.sentences.iter().map(|s| format!("  {s}")));
                run.advisories.push(o.sentences);
                self.last_advisory = Some(o.advisory);
            }
            "feedback" => {
                let helpful = match args {
                    [_, "helpful"] => true,
                    [_, "unhelpful"] => false,
                    _ => return Err(syntax("usage: feedback <report|last> helpful|unhelpful")),
                };
                let id = self.report_ref(args[0])?;
                let o = self.service.feedback(id, helpful).map_err(runtime)?;
                out.push(match o.notified {
                    Some(u) => format!("feedback {id} -> user {u} notified"),
                    None => format!("feedback {id} -> recorded"),
                });
            }
            "leaderboard" => {
                let n = match args {
                    [] => 10,
                    [n] => parse_num(n, "count")?,
                    _ => return Err(syntax("usage: leaderboard [n]")),
                };
                out.push("leaderboard".to_string());
                for row in self.service.leaderboard(n, Period::All) {
                    out.push(format!(
                        "  {}. {} {} points",
                        row.rank, row.display_name, row.points
                    ));
                }
            }
            "assert" => self.assert(args, rest)?,
            _ => return Err(syntax(format!("unknown directive `{cmd}`"))),
        }
        Ok(())
    }

    fn clock_now(&self) -> Timestamp {
        use crate::clock::Clock;
        self.clock.now()
    }

    fn assert(&self, args: &[&str], rest: &str) -> Result<(), ScenarioErrorKind> {
        match args {
            ["overall", sev] => {
                let want = parse_severity(sev)?;
                let got = self.advisory()?.overall;
                if got != want {
                    return Err(failed(format!(
                        "overall severity is {got}, expected {want}"
                    )));
                }
            }
            ["area", loc, sev] => {
                let want = parse_severity(sev)?;
                let got = self.area(loc)?.severity;
                if got != want {
                    return Err(failed(format!("{loc} severity is {got}, expected {want}")));
                }
            }
            ["stale", loc, flag @ ("yes" | "no")] => {
                let want = *flag == "yes";
                if self.area(loc)?.stale != want {
                    return Err(failed(format!("{loc} stale flag is not {flag}")));
                }
            }
            ["timestamp", loc, "last-patrol"] => {
                let got = self.area(loc)?.verified_at;
                if got.is_none() || got != self.last_patrol_at {
                    return Err(failed(format!(
                        "{loc} verified_at {:?} is not the last patrol time {:?}",
                        got.map(|t| format_timestamp(&t)),
                        self.last_patrol_at.map(|t| format_timestamp(&t))
                    )));
                }
            }
            ["update-contains", ..] => {
                let needle = rest
                    .trim_start()
                    .strip_prefix("update-contains")
                    .unwrap_or_default()
                    .trim();
                let update = self
                    .last_update
                    .as_deref()
                    .ok_or_else(|| runtime("no update received yet"))?;
                if needle.is_empty() || !update.contains(needle) {
                    return Err(failed(format!("update does not contain `{needle}`")));
                }
            }
            ["report", id, status] => {
                let id = self.report_ref(id)?;
                let want = parse_status(status)?;
                let got = self.service.report(id).map_err(runtime)?.status;
                if got != want {
                    return Err(failed(format!("report {id} is {got}, expected {want}")));
                }
            }
            ["event", keyword, loc, state @ ("ongoing" | "ended" | "none")] => {
                let keyword = EventKeyword::new(keyword).map_err(|e| syntax(e.to_string()))?;
                let loc = parse_loc(loc)?;
                let got = self.service.store().read(|t| {
                    t.current_events()
                        .find(|e| e.keyword == keyword && e.location == loc)
                        .map(|e| if e.ongoing { "ongoing" } else { "ended" })
                        .unwrap_or("none")
                });
                if got != *state {
                    return Err(failed(format!(
                        "{keyword} at {loc} is {got}, expected {state}"
                    )));
                }
            }
            ["points", alias, n] => {
                let want: u64 = parse_num(n, "points")?;
                let user = self.actor(alias)?.user_id;
                let got = self.service.store().read(|t| t.total_points(user));
                if got != want {
                    return Err(failed(format!("{alias} has {got} points, expected {want}")));
                }
            }
            _ => return Err(syntax(format!("unknown assertion `{}`", args.join(" ")))),
        }
        Ok(())
    }
}

/// Run a script. The error carries the 1-based line that failed.
pub fn run_script(text: &str, opts: &ScenarioOptions) -> Result<ScenarioRun, ScenarioError> {
    let mut cfg = Config {
        map: None,
        world: None,
        model: None,
        seed: 0,
        start: DateTime::parse_from_rfc3339(DEFAULT_START)
            .expect("valid constant")
            .to_utc(),
        step: TimeDelta::seconds(1),
    };
    let mut engine: Option<Engine> = None;
    let mut run = ScenarioRun::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut words = line.split_whitespace();
        let cmd = words.next().expect("non-empty line");
        let args: Vec<&str> = words.collect();
        let is_config = matches!(cmd, "map" | "world" | "model" | "seed" | "clock" | "step");
        let result = if is_config {
            if engine.is_some() {
                Err(syntax(format!("`{cmd}` must come before the first action")))
            } else {
                configure(&mut cfg, cmd, &args)
            }
        } else {
            let engine = match &mut engine {
                Some(e) => Ok(e),
                None => Engine::start(&cfg, opts).map(|e| engine.insert(e)),
            };
            engine.and_then(|e| {
                let rest = line.strip_prefix("assert").unwrap_or(line);
                e.exec(cmd, &args, rest, &mut run)
            })
        };
        if let Err(kind) = result {
            return Err(ScenarioError {
                line: i + 1,
                kind,
                run,
            });
        }
    }
    Ok(run)
}

fn configure(cfg: &mut Config, cmd: &str, args: &[&str]) -> Result<(), ScenarioErrorKind> {
    arity(args, 1, &format!("{cmd} <value>"))?;
    let v = args[0];
    match cmd {
        "map" => cfg.map = Some(PathBuf::from(v)),
        "world" => cfg.world = Some(PathBuf::from(v)),
        "model" => cfg.model = Some(PathBuf::from(v)),
        "seed" => cfg.seed = parse_num(v, "seed")?,
        "clock" => {
            cfg.start = DateTime::parse_from_rfc3339(v)
                .map_err(|_| syntax(format!("bad timestamp `{v}`")))?
                .to_utc()
        }
        "step" => {
            let secs: i64 = parse_num(v, "step")?;
            if secs <= 0 {
                return Err(syntax("step must be positive"));
            }
            cfg.step = TimeDelta::seconds(secs);
        }
        _ => unreachable!("checked by caller"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(text: &str) -> Result<ScenarioRun, ScenarioError> {
        run_script(text, &ScenarioOptions::default())
    }

    #[test]
    fn empty_script_is_silent() {
        assert_eq!(run("").unwrap(), ScenarioRun::default());
        assert_eq!(run("# only a comment\n\n").unwrap(), ScenarioRun::default());
    }

    #[test]
    fn unknown_directive_names_line() {
        let e = run("guest g\nfly away\n").unwrap_err();
        assert_eq!(e.line, 2);
        assert!(matches!(e.kind, ScenarioErrorKind::Syntax(_)));
    }

    #[test]
    fn config_after_action_is_rejected() {
        let e = run("guest g\nseed 3\n").unwrap_err();
        assert_eq!(e.line, 2);
    }

    #[test]
    fn failing_assert_reports_line() {
        let script = "world-add warning_signal elevator_1\nguest g\nreport g event elevator_repair elevator_1\ndispatch\npatrol\nadvise elevator_1\nassert overall low\n";
        let e = run(script).unwrap_err();
        assert_eq!(e.line, 7);
        assert!(matches!(e.kind, ScenarioErrorKind::AssertFailed(_)));
        assert_eq!(e.run.updates.len(), 1);
    }

    #[test]
    fn points_for_registered_reporter() {
        let script = "login alice\nbegin alice\nreport alice obstacle chair 2 corridor_5\nassert points alice 7\n";
        let r = run(script).unwrap();
        assert_eq!(
            r.transcript.last().unwrap(),
            "report 1 by alice -> pending, points 7"
        );
    }
}
