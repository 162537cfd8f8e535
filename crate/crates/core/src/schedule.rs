//! Weekly comfort bounds and the occupancy profile tied to them.

use crate::time::HourStamp;
use chrono::Weekday;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComfortBounds {
    pub t_min: f64,
    pub t_max: f64,
    pub occupied: bool,
}

impl ComfortBounds {
    pub fn occupancy(&self) -> f64 {
        if self.occupied {
            1.0
        } else {
            0.0
        }
    }
}

/// Occupied hours `[occupied_from, occupied_until)` on working days get the
/// tight band, every other hour the loose one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComfortSchedule {
    pub occupied_from: usize,
    pub occupied_until: usize,
    /// Monday = 0 .. Sunday = 6.
    pub working_days: Vec<u8>,
    pub occupied_t_min: f64,
    pub occupied_t_max: f64,
    pub vacant_t_min: f64,
    pub vacant_t_max: f64,
}

impl Default for ComfortSchedule {
    fn default() -> Self {
        ComfortSchedule {
            occupied_from: 8,
            occupied_until: 18,
            working_days: vec![0, 1, 2, 3, 4],
            occupied_t_min: 21.5,
            occupied_t_max: 24.0,
            vacant_t_min: 18.0,
            vacant_t_max: 26.0,
        }
    }
}

impl ComfortSchedule {
    pub fn validate(&self) -> Result<(), String> {
        if self.occupied_t_min >= self.occupied_t_max || self.vacant_t_min >= self.vacant_t_max {
            return Err("comfort bounds need t_min < t_max".into());
        }
        if self.occupied_from > self.occupied_until || self.occupied_until > 24 {
            return Err("occupied hours must satisfy from <= until <= 24".into());
        }
        if self.working_days.iter().any(|d| *d > 6) {
            return Err("working days are 0 (Monday) ..= 6 (Sunday)".into());
        }
        Ok(())
    }

    pub fn is_occupied(&self, t: HourStamp) -> bool {
        let h = t.hour_of_day();
        let wd: Weekday = t.weekday();
        self.working_days.contains(&(wd.num_days_from_monday() as u8))
            && h >= self.occupied_from
            && h < self.occupied_until
    }

    pub fn bounds(&self, t: HourStamp) -> ComfortBounds {
        if self.is_occupied(t) {
            ComfortBounds {
                t_min: self.occupied_t_min,
                t_max: self.occupied_t_max,
                occupied: true,
            }
        } else {
            ComfortBounds {
                t_min: self.vacant_t_min,
                t_max: self.vacant_t_max,
                occupied: false,
            }
        }
    }

    pub fn occupancy(&self, t: HourStamp) -> f64 {
        self.bounds(t).occupancy()
    }

    /// Bounds for `len` consecutive hours starting at `from`.
    pub fn window(&self, from: HourStamp, len: usize) -> Vec<ComfortBounds> {
        (0..len as i64).map(|k| self.bounds(from + k)).collect()
    }
}
