//! Integer-nanosecond simulation clock.
//!
//! All protocol timers in the stack are exact multiples of microseconds, so an
//! integer nanosecond base avoids every floating-point drift concern while
//! still leaving headroom for sub-microsecond arithmetic (airtime of a single
//! byte is ~1333 ns).

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

/// Duration in nanoseconds.
pub type Nanos = u64;

pub const NANOS_PER_MICRO: Nanos = 1_000;
pub const NANOS_PER_MILLI: Nanos = 1_000_000;
pub const NANOS_PER_SEC: Nanos = 1_000_000_000;

pub const fn micros(n: u64) -> Nanos {
    n * NANOS_PER_MICRO
}

pub const fn millis(n: u64) -> Nanos {
    n * NANOS_PER_MILLI
}

pub const fn secs(n: u64) -> Nanos {
    n * NANOS_PER_SEC
}

/// Convert a duration in seconds to nanoseconds, rounding to nearest.
pub fn secs_f64(s: f64) -> Nanos {
    (s * NANOS_PER_SEC as f64).round() as Nanos
}

/// Convert a duration in milliseconds to nanoseconds, rounding to nearest.
pub fn millis_f64(ms: f64) -> Nanos {
    (ms * NANOS_PER_MILLI as f64).round() as Nanos
}

/// Instant on the simulation clock, nanoseconds since run start.
#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(pub Nanos);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn nanos(self) -> Nanos {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / NANOS_PER_SEC as f64
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / NANOS_PER_MILLI as f64
    }

    /// Time elapsed since `earlier`, zero if `earlier` is in the future.
    pub fn since(self, earlier: SimTime) -> Nanos {
        self.0.saturating_sub(earlier.0)
    }
}

impl Add<Nanos> for SimTime {
    type Output = SimTime;
    fn add(self, rhs: Nanos) -> SimTime {
        SimTime(self.0 + rhs)
    }
}

impl AddAssign<Nanos> for SimTime {
    fn add_assign(&mut self, rhs: Nanos) {
        self.0 += rhs;
    }
}

impl Sub<SimTime> for SimTime {
    type Output = Nanos;
    fn sub(self, rhs: SimTime) -> Nanos {
        self.0.saturating_sub(rhs.0)
    }
}

impl fmt::Debug for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}s", self.as_secs_f64())
    }
}
