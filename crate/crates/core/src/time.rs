//! Simulation clock.
//!
//! Time is kept as integer nanoseconds so that event ordering, tick grids and
//! trace output are exact and platform independent.

use std::fmt;
use std::ops::{Add, Sub};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const NANOS_PER_SEC: u64 = 1_000_000_000;

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    /// Rounds to the nearest nanosecond. Negative inputs saturate at zero.
    pub fn from_secs(secs: f64) -> Self {
        if secs <= 0.0 {
            return SimTime(0);
        }
        SimTime((secs * Self::NANOS_PER_SEC as f64).round() as u64)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs(self) -> f64 {
        self.0 as f64 / Self::NANOS_PER_SEC as f64
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1_000_000.0
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:09}", self.0 / Self::NANOS_PER_SEC, self.0 % Self::NANOS_PER_SEC)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounds_to_nearest_nanosecond() {
        assert_eq!(SimTime::from_secs(0.1).as_nanos(), 100_000_000);
        assert_eq!(SimTime::from_secs(13e-6).as_nanos(), 13_000);
        assert_eq!(SimTime::from_secs(-1.0), SimTime::ZERO);
    }

    #[test]
    fn display_is_fixed_point() {
        assert_eq!(SimTime::from_nanos(1_200_429_333).to_string(), "1.200429333");
    }
}
