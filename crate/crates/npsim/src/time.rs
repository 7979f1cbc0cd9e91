//! Integer-nanosecond simulation time.
//!
//! All timing in the simulator is exact 64-bit nanosecond arithmetic so
//! event ordering never depends on floating-point rounding and runs are
//! bit-reproducible across machines.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

/// Nanoseconds since simulation start.
#[derive(
    Debug, Default, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
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
        write!(f, "{}ns", self.0)
    }
}

/// Wire serialization time of `size_bytes` on a `rate_bps` link, in
/// nanoseconds, rounded half up.
///
/// `size_bytes * 8e9 / rate_bps`, computed in integer arithmetic.
pub fn serialization_ns(size_bytes: u32, rate_bps: u64) -> u64 {
    debug_assert!(rate_bps > 0);
    let bits_scaled = size_bytes as u128 * 8 * 1_000_000_000u128;
    ((bits_scaled + rate_bps as u128 / 2) / rate_bps as u128) as u64
}
