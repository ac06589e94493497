//! Calendar helpers over Unix seconds shifted by a fixed UTC offset.

use std::fmt;

use chrono::{DateTime, Datelike, NaiveDateTime, Timelike};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

fn local(ts: i64, tz_offset_s: i32) -> NaiveDateTime {
    DateTime::from_timestamp(ts + i64::from(tz_offset_s), 0)
        .expect("timestamp in chrono range")
        .naive_utc()
}

/// 24 * weekday + hour in local time, Monday = 0, so the result is in 0..=167.
pub fn hour_of_week(ts: i64, tz_offset_s: i32) -> u32 {
    let t = local(ts, tz_offset_s);
    24 * t.weekday().num_days_from_monday() + t.hour()
}

/// ISO-8601 (year, week) in local time.
pub fn iso_week(ts: i64, tz_offset_s: i32) -> (i32, u32) {
    let w = local(ts, tz_offset_s).iso_week();
    (w.year(), w.week())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MonthKey {
    pub year: i32,
    pub month: u32,
}

impl MonthKey {
    pub fn of(ts: i64, tz_offset_s: i32) -> Self {
        let t = local(ts, tz_offset_s);
        MonthKey {
            year: t.year(),
            month: t.month(),
        }
    }
}

impl fmt::Display for MonthKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl Serialize for MonthKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MonthKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        let parsed = s.split_once('-').and_then(|(y, m)| {
            let year = y.parse().ok()?;
            let month: u32 = m.parse().ok()?;
            (1..=12).contains(&month).then_some(MonthKey { year, month })
        });
        parsed.ok_or_else(|| serde::de::Error::custom(format!("bad month `{s}`")))
    }
}
