//! Time source abstraction so sessions and ledgers can run on a logical clock
//! during replay.

use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use chrono::{DateTime, TimeZone, Utc};

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Deterministic clock: starts at a fixed instant and advances by a fixed
/// step (milliseconds) on every call.
#[derive(Debug)]
pub struct LogicalClock {
    next_ms: AtomicI64,
    step_ms: i64,
}

impl LogicalClock {
    pub fn new(start: DateTime<Utc>, step_ms: i64) -> Self {
        Self {
            next_ms: AtomicI64::new(start.timestamp_millis()),
            step_ms,
        }
    }
}

impl Default for LogicalClock {
    fn default() -> Self {
        Self::new(Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap(), 1000)
    }
}

impl Clock for LogicalClock {
    fn now(&self) -> DateTime<Utc> {
        let ms = self.next_ms.fetch_add(self.step_ms, Ordering::SeqCst);
        Utc.timestamp_millis_opt(ms).single().unwrap_or_default()
    }
}

pub type SharedClock = Arc<dyn Clock>;

pub fn system_clock() -> SharedClock {
    Arc::new(SystemClock)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logical_clock_is_strictly_increasing() {
        let c = LogicalClock::default();
        let a = c.now();
        let b = c.now();
        assert_eq!((b - a).num_milliseconds(), 1000);
    }
}
