use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;

use chrono::DateTime;
use patrol::channel::{ChannelError, SyncChannel};
use sha2::{Digest, Sha256};

const WRITERS: usize = 2;
const PUBLISHES: usize = 100;

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn payload(writer: usize, seq: usize) -> Vec<u8> {
    let body: String = (0..64)
        .map(|i| {
            format!(
                "#Obstacle, {}, chair, {}, corridor_{writer}\n",
                i + 1,
                seq + 1
            )
        })
        .collect();
    let sum = hex(&Sha256::digest(body.as_bytes()));
    format!("{body}sha256={sum}\n").into_bytes()
}

fn intact(content: &[u8]) -> bool {
    let text = std::str::from_utf8(content).unwrap();
    let Some((body, tail)) = text.rsplit_once("sha256=") else {
        return false;
    };
    tail.trim_end() == hex(&Sha256::digest(body.as_bytes()))
}

#[test]
fn concurrent_writers_and_readers_never_see_torn_files() {
    let dir = tempfile::tempdir().unwrap();
    let channel = SyncChannel::open(dir.path()).unwrap();
    let done = Arc::new(AtomicBool::new(false));
    let t0 = DateTime::from_timestamp(1_750_000_000, 0).unwrap();

    let readers: Vec<_> = (0..3)
        .map(|_| {
            let ch = channel.clone();
            let done = done.clone();
            thread::spawn(move || {
                let mut last = 0;
                let mut reads = 0;
                while !done.load(Ordering::SeqCst) {
                    match ch.fetch_latest("Update.txt") {
                        Ok(f) => {
                            assert!(intact(&f.content), "torn read at revision {}", f.revision);
                            assert!(f.revision >= last, "revision went back");
                            last = f.revision;
                            reads += 1;
                        }
                        Err(ChannelError::NotFound(_)) => {}
                        Err(e) => panic!("{e}"),
                    }
                }
                reads
            })
        })
        .collect();

    let writers: Vec<_> = (0..WRITERS)
        .map(|w| {
            let ch = channel.clone();
            thread::spawn(move || {
                let mut revs = Vec::new();
                for seq in 0..PUBLISHES {
                    let at = t0 + chrono::TimeDelta::seconds(seq as i64);
                    revs.push(ch.publish("Update.txt", &payload(w, seq), at).unwrap());
                }
                revs
            })
        })
        .collect();

    let mut all_revs: Vec<u64> = Vec::new();
    for w in writers {
        let revs = w.join().unwrap();
        assert!(revs.windows(2).all(|p| p[0] < p[1]));
        all_revs.extend(revs);
    }
    done.store(true, Ordering::SeqCst);
    let reads: usize = readers.into_iter().map(|r| r.join().unwrap()).sum();
    assert!(reads > 0);

    all_revs.sort_unstable();
    let expected: Vec<u64> = (1..=(WRITERS * PUBLISHES) as u64).collect();
    assert_eq!(all_revs, expected, "every publish got its own revision");

    let last = channel.fetch_latest("Update.txt").unwrap();
    assert_eq!(last.revision, (WRITERS * PUBLISHES) as u64);
    assert!(intact(&last.content));
    let leftovers: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.contains(".tmp"))
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

#[test]
fn missing_directory_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let gone = dir.path().join("nope");
    assert!(matches!(
        SyncChannel::open(&gone),
        Err(ChannelError::ChannelUnavailable { .. })
    ));
}

#[test]
fn await_change_times_out_then_sees_publish() {
    let dir = tempfile::tempdir().unwrap();
    let ch = SyncChannel::open(dir.path()).unwrap();
    let wait = std::time::Duration::from_millis(30);
    assert!(matches!(
        ch.await_change("MissionMessage.txt", 0, wait),
        Err(ChannelError::Timeout { .. })
    ));
    let t0 = DateTime::from_timestamp(1_750_000_000, 0).unwrap();
    let ch2 = ch.clone();
    let h = thread::spawn(move || {
        thread::sleep(std::time::Duration::from_millis(20));
        ch2.publish("MissionMessage.txt", b"", t0).unwrap()
    });
    let rev = ch
        .await_change("MissionMessage.txt", 0, std::time::Duration::from_secs(5))
        .unwrap();
    assert_eq!(rev, h.join().unwrap());
}
