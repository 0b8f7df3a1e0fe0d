//! Timestamp parsing, formatting, and calendar spans.

use std::fmt;
use std::str::FromStr;

use chrono::{Months, NaiveDate, NaiveDateTime, NaiveTime, TimeDelta};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub type Timestamp = NaiveDateTime;

pub const SECONDS_PER_DAY: i64 = 86_400;

pub fn days(n: i64) -> TimeDelta {
    TimeDelta::seconds(n * SECONDS_PER_DAY)
}

pub fn midnight(date: NaiveDate) -> Timestamp {
    date.and_time(NaiveTime::MIN)
}

/// Accepts `YYYY-MM-DDTHH:MM:SS` (optional trailing `Z`), `YYYY-MM-DD HH:MM:SS`,
/// and bare dates.
pub fn parse_timestamp(s: &str) -> Option<Timestamp> {
    let s = s.trim();
    let s = s.strip_suffix('Z').unwrap_or(s);
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S%.f"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t);
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok().map(midnight)
}

pub fn format_timestamp(t: Timestamp) -> String {
    t.format("%Y-%m-%dT%H:%M:%S").to_string()
}

pub fn epoch_seconds(t: Timestamp) -> i64 {
    t.and_utc().timestamp()
}

pub fn from_epoch_seconds(s: i64) -> Timestamp {
    chrono::DateTime::from_timestamp(s, 0)
        .expect("epoch seconds in chrono range")
        .naive_utc()
}

/// Elapsed time in fractional days.
pub fn elapsed_days(from: Timestamp, to: Timestamp) -> f64 {
    (to - from).num_seconds() as f64 / SECONDS_PER_DAY as f64
}

/// A duration expressed either in whole days or whole calendar months.
///
/// Serialized as `"182d"` or `"1M"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Span {
    Days(u32),
    Months(u32),
}

impl Span {
    pub fn is_positive(self) -> bool {
        match self {
            Span::Days(d) => d > 0,
            Span::Months(m) => m > 0,
        }
    }

    pub fn after(self, t: Timestamp) -> Timestamp {
        self.times_after(t, 1)
    }

    pub fn before(self, t: Timestamp) -> Timestamp {
        match self {
            Span::Days(d) => t - days(d as i64),
            Span::Months(m) => t
                .checked_sub_months(Months::new(m))
                .expect("month arithmetic in range"),
        }
    }

    /// `t + n * self`, computed from `t` in one step so month clamping does not drift.
    pub fn times_after(self, t: Timestamp, n: u32) -> Timestamp {
        match self {
            Span::Days(d) => t + days(d as i64 * n as i64),
            Span::Months(m) => t
                .checked_add_months(Months::new(m * n))
                .expect("month arithmetic in range"),
        }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Span::Days(d) => write!(f, "{d}d"),
            Span::Months(m) => write!(f, "{m}M"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("invalid span `{0}`: expected e.g. `182d` or `1M`")]
pub struct SpanParseError(String);

impl FromStr for Span {
    type Err = SpanParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let err = || SpanParseError(s.to_string());
        if let Some(n) = s.strip_suffix('d') {
            n.parse().map(Span::Days).map_err(|_| err())
        } else if let Some(n) = s.strip_suffix('M') {
            n.parse().map(Span::Months).map_err(|_| err())
        } else {
            Err(err())
        }
    }
}

impl Serialize for Span {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Span {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
