//! Injectable time source. Session logic never reads the wall clock directly,
//! so replays can feed recorded timestamps back in.

use chrono::{DateTime, SecondsFormat, Utc};
use std::sync::Mutex;

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

/// Starts at a fixed instant and advances by a fixed step on every read.
#[derive(Debug)]
pub struct SteppingClock {
    next: Mutex<DateTime<Utc>>,
    step: chrono::Duration,
}

impl SteppingClock {
    pub fn new(start: DateTime<Utc>, step: chrono::Duration) -> Self {
        Self {
            next: Mutex::new(start),
            step,
        }
    }

    pub fn from_rfc3339(start: &str, step_ms: i64) -> Self {
        let start = DateTime::parse_from_rfc3339(start)
            .expect("valid RFC3339 start")
            .with_timezone(&Utc);
        Self::new(start, chrono::Duration::milliseconds(step_ms))
    }
}

impl Clock for SteppingClock {
    fn now(&self) -> DateTime<Utc> {
        let mut next = self.next.lock().unwrap();
        let now = *next;
        *next = now + self.step;
        now
    }
}

/// Canonical timestamp rendering used in transcripts and fixtures.
pub fn format_timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .ok()
        .map(|t| t.with_timezone(&Utc))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stepping_clock_advances() {
        let clock = SteppingClock::from_rfc3339("2021-09-18T19:30:00Z", 1500);
        assert_eq!(format_timestamp(clock.now()), "2021-09-18T19:30:00.000Z");
        assert_eq!(format_timestamp(clock.now()), "2021-09-18T19:30:01.500Z");
        let t = parse_timestamp("2021-09-18T19:30:01.500Z").unwrap();
        assert_eq!(format_timestamp(t), "2021-09-18T19:30:01.500Z");
    }
}
