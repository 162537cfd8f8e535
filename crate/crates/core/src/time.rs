//! Hourly time axis shared by weather, forecasts and the closed loop.

use chrono::{Datelike, NaiveDateTime, Timelike, Weekday};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Add, Sub};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Whole hours since 1970-01-01T00:00 (naive local time).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HourStamp(pub i64);

impl HourStamp {
    pub fn from_datetime(dt: NaiveDateTime) -> Self {
        HourStamp(dt.and_utc().timestamp().div_euclid(3600))
    }

    pub fn parse(s: &str) -> Result<Self, chrono::ParseError> {
        NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT).map(Self::from_datetime)
    }

    pub fn datetime(self) -> NaiveDateTime {
        chrono::DateTime::from_timestamp(self.0 * 3600, 0)
            .expect("hour stamp within chrono range")
            .naive_utc()
    }

    pub fn hour_of_day(self) -> usize {
        self.0.rem_euclid(24) as usize
    }

    pub fn day(self) -> i64 {
        self.0.div_euclid(24)
    }

    pub fn weekday(self) -> Weekday {
        self.datetime().weekday()
    }

    /// Fractional day of year, 0 at Jan 1 00:00.
    pub fn day_of_year(self) -> f64 {
        let dt = self.datetime();
        dt.ordinal0() as f64 + dt.hour() as f64 / 24.0
    }
}

impl Add<i64> for HourStamp {
    type Output = HourStamp;
    fn add(self, rhs: i64) -> HourStamp {
        HourStamp(self.0 + rhs)
    }
}

impl Sub<i64> for HourStamp {
    type Output = HourStamp;
    fn sub(self, rhs: i64) -> HourStamp {
        HourStamp(self.0 - rhs)
    }
}

impl Sub<HourStamp> for HourStamp {
    type Output = i64;
    fn sub(self, rhs: HourStamp) -> i64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for HourStamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.datetime().format(TIMESTAMP_FORMAT))
    }
}
