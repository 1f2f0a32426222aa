//! Wall-clock abstraction so scenarios and tests can run on simulated time.

use std::sync::Mutex;
use std::time::Duration;

use chrono::{TimeDelta, Utc};
use patrol_core::Timestamp;

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
    /// Let `d` pass. Simulated clocks advance instantly.
    fn sleep(&self, d: TimeDelta);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        Utc::now()
    }

    fn sleep(&self, d: TimeDelta) {
        if let Ok(d) = d.to_std() {
            std::thread::sleep(d);
        }
    }
}

/// Simulated time that only moves when told to.
#[derive(Debug)]
pub struct ManualClock {
    now: Mutex<Timestamp>,
}

impl ManualClock {
    pub fn new(start: Timestamp) -> Self {
        Self {
            now: Mutex::new(start),
        }
    }

    pub fn set(&self, t: Timestamp) {
        *self.now.lock().unwrap() = t;
    }

    pub fn advance(&self, d: TimeDelta) {
        *self.now.lock().unwrap() += d;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Timestamp {
        *self.now.lock().unwrap()
    }

    fn sleep(&self, d: TimeDelta) {
        self.advance(d);
    }
}

/// Convert milliseconds from the command line into a step duration.
pub fn millis(ms: u64) -> TimeDelta {
    TimeDelta::from_std(Duration::from_millis(ms)).unwrap_or(TimeDelta::MAX)
}
