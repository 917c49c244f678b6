//! Time of day as the generator's control variable.

use std::f64::consts::TAU;
use std::fmt;

use chrono::{DateTime, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SECONDS_PER_DAY: i64 = 86_400;

/// Fraction of a 24-hour day, always in `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct TimeOfDay(f64);

impl TimeOfDay {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::Config(format!("time of day {value} outside [0, 1)")))
        }
    }

    /// Wraps any finite real onto the day circle.
    pub fn wrapping(value: f64) -> Self {
        let mut t = value.rem_euclid(1.0);
        // rem_euclid can round up to exactly 1.0 for tiny negative inputs
        if t >= 1.0 {
            t = 0.0;
        }
        Self(t)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for TimeOfDay {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<TimeOfDay> for f64 {
    fn from(t: TimeOfDay) -> f64 {
        t.0
    }
}

impl fmt::Display for TimeOfDay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let minutes = (self.0 * 1440.0).round() as i64 % 1440;
        write!(f, "{:02}:{:02}", minutes / 60, minutes % 60)
    }
}

/// Local time of day for a UTC timestamp taken at a camera whose clock is
/// `utc_offset_minutes` ahead of UTC.
pub fn normalize_timestamp(wall_clock: DateTime<Utc>, utc_offset_minutes: i32) -> TimeOfDay {
    let utc_secs = wall_clock.num_seconds_from_midnight() as i64;
    let local = (utc_secs + utc_offset_minutes as i64 * 60).rem_euclid(SECONDS_PER_DAY);
    let frac = wall_clock.nanosecond() as f64 * 1e-9;
    TimeOfDay::wrapping((local as f64 + frac) / SECONDS_PER_DAY as f64)
}

/// Validates the offset range accepted in manifests: ±14 hours.
pub fn check_utc_offset(minutes: i32) -> Result<()> {
    if (-14 * 60..=14 * 60).contains(&minutes) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "utc offset {minutes} min outside [-840, 840]"
        )))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeEncodingMode {
    /// `[t]`; discontinuous at midnight.
    Raw,
    /// `[sin 2πt, cos 2πt]`.
    #[default]
    Cyclic,
}

impl TimeEncodingMode {
    pub fn channels(self) -> usize {
        match self {
            TimeEncodingMode::Raw => 1,
            TimeEncodingMode::Cyclic => 2,
        }
    }

    pub fn encode(self, t: TimeOfDay) -> Vec<f32> {
        encode_raw(self, t.value())
    }
}

/// Encodes an arbitrary real; used to check continuity across `t = 1`.
pub fn encode_raw(mode: TimeEncodingMode, t: f64) -> Vec<f32> {
    match mode {
        TimeEncodingMode::Raw => vec![t as f32],
        TimeEncodingMode::Cyclic => vec![(TAU * t).sin() as f32, (TAU * t).cos() as f32],
    }
}

pub fn encode_time(t: TimeOfDay, mode: TimeEncodingMode) -> Vec<f32> {
    mode.encode(t)
}
