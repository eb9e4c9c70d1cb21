//! Time-slot arithmetic and the rate-estimation policy knobs.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DayFilter {
    /// Monday through Friday.
    Weekdays,
    All,
}

/// Slot length, day filter and trailing-window length used when estimating
/// per-cell rates, plus the timezone offset that keeps slot-of-day stable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSlotSpec {
    pub slot_minutes: u32,
    pub day_filter: DayFilter,
    pub window_days: u32,
    pub utc_offset_minutes: i32,
}

impl Default for TimeSlotSpec {
    fn default() -> Self {
        Self {
            slot_minutes: 30,
            day_filter: DayFilter::Weekdays,
            window_days: 30,
            utc_offset_minutes: 0,
        }
    }
}

impl TimeSlotSpec {
    pub fn new(
        slot_minutes: u32,
        day_filter: DayFilter,
        window_days: u32,
        utc_offset_minutes: i32,
    ) -> Result<Self> {
        if slot_minutes == 0 || 1440 % slot_minutes != 0 {
            return Err(Error::invalid(
                "slot spec",
                format!("slot_minutes must divide 1440, got {slot_minutes}"),
            ));
        }
        if window_days == 0 {
            return Err(Error::invalid("slot spec", "window_days must be positive"));
        }
        if utc_offset_minutes.unsigned_abs() > 14 * 60 {
            return Err(Error::invalid("slot spec", "utc offset out of range"));
        }
        Ok(Self {
            slot_minutes,
            day_filter,
            window_days,
            utc_offset_minutes,
        })
    }

    pub fn slots_per_day(&self) -> u32 {
        1440 / self.slot_minutes
    }

    /// Absolute slot index of a unix timestamp, in the configured timezone.
    pub fn slot_index(&self, unix_secs: i64) -> i64 {
        let local = unix_secs + self.utc_offset_minutes as i64 * 60;
        local.div_euclid(self.slot_minutes as i64 * 60)
    }

    pub fn slot_of_day(&self, slot_index: i64) -> u32 {
        slot_index.rem_euclid(self.slots_per_day() as i64) as u32
    }

    pub fn day_index(&self, slot_index: i64) -> i64 {
        slot_index.div_euclid(self.slots_per_day() as i64)
    }

    pub fn slot_for(&self, day_index: i64, slot_of_day: u32) -> i64 {
        day_index * self.slots_per_day() as i64 + slot_of_day as i64
    }

    /// Local start of a slot, as a unix timestamp.
    pub fn slot_start_unix(&self, slot_index: i64) -> i64 {
        slot_index * self.slot_minutes as i64 * 60 - self.utc_offset_minutes as i64 * 60
    }

    /// 0 = Monday .. 6 = Sunday. Day 0 (1970-01-01) was a Thursday.
    pub fn weekday(day_index: i64) -> u32 {
        (day_index + 3).rem_euclid(7) as u32
    }

    pub fn day_qualifies(&self, day_index: i64) -> bool {
        match self.day_filter {
            DayFilter::All => true,
            DayFilter::Weekdays => Self::weekday(day_index) < 5,
        }
    }
}
