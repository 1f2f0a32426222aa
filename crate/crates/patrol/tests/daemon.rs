use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use chrono::{DateTime, TimeDelta};
use patrol::channel::SyncChannel;
use patrol::clock::{Clock, ManualClock, SystemClock};
use patrol::daemon::Daemon;
use patrol_core::map::{load_map, DEMO_MAP};
use patrol_core::protocol::{MISSION_FILE, UPDATE_FILE};
use patrol_core::{format_timestamp, Timestamp};

const ELEVATOR: &[u8] = b"#Event, 1, elevator_repair, elevator_1\n";
const WAITING: &[u8] = b"#Event, 1, class_waiting, corridor_3\n";

fn t0() -> Timestamp {
    DateTime::from_timestamp(1_750_000_000, 0).unwrap()
}

#[test]
fn missions_are_answered_in_order_and_latest_wins() {
    let dir = tempfile::tempdir().unwrap();
    let ch = SyncChannel::open(dir.path()).unwrap();
    let clock = Arc::new(ManualClock::new(t0()));
    let world = dir.path().join("office.world");
    std::fs::write(&world, "object warning_signal elevator_1\n").unwrap();
    let daemon =
        Daemon::new(ch.clone(), load_map(DEMO_MAP).unwrap(), clock.clone()).with_world_file(&world);

    ch.publish(MISSION_FILE, ELEVATOR, clock.now()).unwrap();
    let first = daemon.run_once(Duration::from_millis(50)).unwrap().unwrap();
    assert_eq!((first.mission_revision, first.update_revision), (1, 1));
    assert!(first.update.to_text().starts_with("#Event, 1, 1\n"));
    let log = first.log.unwrap();
    assert_eq!(clock.now(), log.finished_at);
    let published = ch.fetch_latest(UPDATE_FILE).unwrap();
    assert_eq!(published.written_at, log.finished_at);
    assert_eq!(published.content, first.update.to_text().into_bytes());

    // The world changes on disk and two missions queue up before the robot
    // looks again; only the newest one is patrolled.
    std::fs::write(&world, "object people corridor_3\n".repeat(3)).unwrap();
    ch.publish(MISSION_FILE, ELEVATOR, clock.now()).unwrap();
    ch.publish(MISSION_FILE, WAITING, clock.now()).unwrap();
    let second = daemon.run_once(Duration::from_millis(50)).unwrap().unwrap();
    assert_eq!((second.mission_revision, second.update_revision), (3, 2));
    let text = second.update.to_text();
    assert!(text.starts_with("#Event, 1, 1\n"), "{text}");
    assert!(
        text.contains("#Obstacle, 1, people, 3, corridor_3\n"),
        "{text}"
    );
    assert!(!text.contains("warning_signal"));
    assert_eq!(daemon.handled_revision(), 3);

    assert!(daemon
        .run_once(Duration::from_millis(30))
        .unwrap()
        .is_none());
}

#[test]
fn identical_inputs_give_identical_updates() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let ch = SyncChannel::open(dir.path()).unwrap();
        let clock = Arc::new(ManualClock::new(t0()));
        let mut model = patrol_core::DetectionModel::perfect(5);
        for c in patrol_core::ObstacleClass::ALL {
            model.set_p_tp(c, 0.7).unwrap();
            model.set_lambda_fp(c, 0.2).unwrap();
        }
        let world = patrol_core::WorldState::parse(
            "object chair corridor_5\nobject chair corridor_5\nobject people corridor_3\n",
        )
        .unwrap();
        let daemon = Daemon::new(ch.clone(), load_map(DEMO_MAP).unwrap(), clock)
            .with_model(model)
            .with_world(world);
        ch.publish(MISSION_FILE, WAITING, t0()).unwrap();
        let c = daemon.run_once(Duration::from_millis(50)).unwrap().unwrap();
        (
            c.update.to_text(),
            format_timestamp(&c.log.unwrap().finished_at),
        )
    };
    assert_eq!(run(), run());
}

#[test]
fn background_loop_serves_until_stopped() {
    let dir = tempfile::tempdir().unwrap();
    let ch = SyncChannel::open(dir.path()).unwrap();
    let daemon = Arc::new(
        Daemon::new(
            ch.clone(),
            load_map(DEMO_MAP).unwrap(),
            Arc::new(SystemClock),
        )
        .with_step(TimeDelta::milliseconds(1)),
    );
    let stop = Arc::new(AtomicBool::new(false));
    let handle = {
        let (d, s) = (daemon.clone(), stop.clone());
        thread::spawn(move || d.run(&s, Duration::from_millis(20)))
    };
    for expected in 1..=2u64 {
        ch.publish(MISSION_FILE, ELEVATOR, chrono::Utc::now())
            .unwrap();
        let rev = ch
            .await_change(UPDATE_FILE, expected - 1, Duration::from_secs(10))
            .unwrap();
        assert_eq!(rev, expected);
        assert_eq!(
            ch.fetch_latest(UPDATE_FILE).unwrap().content,
            b"#Event, 1, 0\n"
        );
    }
    stop.store(true, Ordering::SeqCst);
    handle.join().unwrap().unwrap();
    assert_eq!(daemon.handled_revision(), 2);
}

#[test]
fn update_in_the_same_second_as_dispatch_is_applied() {
    let dir = tempfile::tempdir().unwrap();
    let ch = SyncChannel::open(dir.path()).unwrap();
    let clock = Arc::new(ManualClock::new(
        DateTime::from_timestamp(1_750_000_000, 700_000_000).unwrap(),
    ));
    let map = load_map(DEMO_MAP).unwrap();
    let service = patrol::service::PatrolService::new(
        patrol::datastore::Datastore::in_memory(),
        ch.clone(),
        map.clone(),
        clock.clone(),
    );
    let daemon = Daemon::new(ch, map, clock).with_step(TimeDelta::milliseconds(1));
    service
        .submit_report(
            None,
            None,
            &patrol::service::ReportRequest::Event {
                keyword: "elevator_repair".into(),
                location: "elevator_1".into(),
            },
        )
        .unwrap();
    service.dispatch().unwrap();
    daemon.run_once(Duration::from_millis(50)).unwrap().unwrap();
    let synced = service.sync_updates().unwrap().expect("update applied");
    assert_eq!(synced.counts.reports_refuted.len(), 1);
}
