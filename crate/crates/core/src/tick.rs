//! Dyadic fixed-point model of the memory interval.
//!
//! Memory is `[0, 1]` scaled to `2^resolution_log2` integer ticks. All sizes
//! and offsets are tick counts, so interval arithmetic is exact: no
//! floating-point false overlaps, and every ε = 4^-k as well as the derived
//! quantities the allocators need (ε^{1/2}, ε⁵ at sufficient resolution, the
//! power-of-two mass limits) are representable exactly.

use serde::{Deserialize, Serialize};

pub const MIN_RESOLUTION_LOG2: u32 = 30;
pub const MAX_RESOLUTION_LOG2: u32 = 62;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TickConfig {
    pub resolution_log2: u32,
    pub epsilon_ticks: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TickError {
    ResolutionOutOfRange(u32),
    EpsilonOutOfRange(u64),
}

impl std::fmt::Display for TickError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TickError::ResolutionOutOfRange(r) => write!(f, "resolution_log2 {r} out of range"),
            TickError::EpsilonOutOfRange(e) => write!(f, "epsilon_ticks {e} out of range"),
        }
    }
}

impl std::error::Error for TickError {}

impl TickConfig {
    pub fn new(resolution_log2: u32, epsilon_ticks: u64) -> Result<Self, TickError> {
        if !(MIN_RESOLUTION_LOG2..=MAX_RESOLUTION_LOG2).contains(&resolution_log2) {
            return Err(TickError::ResolutionOutOfRange(resolution_log2));
        }
        let mem = 1u64 << resolution_log2;
        if epsilon_ticks == 0 || epsilon_ticks > mem {
            return Err(TickError::EpsilonOutOfRange(epsilon_ticks));
        }
        Ok(Self { resolution_log2, epsilon_ticks })
    }

    /// ε = 4^-k at the given resolution.
    pub fn pow4(resolution_log2: u32, k: u32) -> Result<Self, TickError> {
        if 2 * k >= resolution_log2 {
            return Err(TickError::EpsilonOutOfRange(0));
        }
        Self::new(resolution_log2, 1u64 << (resolution_log2 - 2 * k))
    }

    #[inline]
    pub fn memory_ticks(&self) -> u64 {
        1u64 << self.resolution_log2
    }

    /// Largest admissible present mass, (1-ε)·memory.
    #[inline]
    pub fn load_limit(&self) -> u64 {
        self.memory_ticks() - self.epsilon_ticks
    }

    /// True when ε = 4^-k; returns k.
    pub fn epsilon_log4(&self) -> Option<u32> {
        if !self.epsilon_ticks.is_power_of_two() {
            return None;
        }
        let shift = self.resolution_log2 - self.epsilon_ticks.trailing_zeros();
        if shift % 2 == 0 {
            Some(shift / 2)
        } else {
            None
        }
    }

    /// ε as a fraction of memory.
    pub fn epsilon_f64(&self) -> f64 {
        self.epsilon_ticks as f64 / self.memory_ticks() as f64
    }

    /// ε^exp · memory, rounded to nearest tick. For frozen size-class and
    /// mem-block boundaries; never used in per-update arithmetic.
    pub fn eps_pow_ticks(&self, exp: f64) -> u64 {
        let v = self.epsilon_f64().powf(exp) * self.memory_ticks() as f64;
        v.round().clamp(0.0, self.memory_ticks() as f64) as u64
    }
}

/// floor(a * b / c) in 128-bit intermediate precision, saturating at
/// u64::MAX.
#[inline]
pub fn mul_div(a: u64, b: u64, c: u64) -> u64 {
    debug_assert!(c > 0);
    ((a as u128 * b as u128) / c as u128).min(u64::MAX as u128) as u64
}

/// ceil(a * b / c) in 128-bit intermediate precision, saturating at
/// u64::MAX.
#[inline]
pub fn mul_div_ceil(a: u64, b: u64, c: u64) -> u64 {
    debug_assert!(c > 0);
    ((a as u128 * b as u128 + (c as u128 - 1)) / c as u128).min(u64::MAX as u128) as u64
}

/// Largest power of two ≤ v (v ≥ 1).
#[inline]
pub fn pow2_floor(v: u64) -> u64 {
    debug_assert!(v >= 1);
    1u64 << (63 - v.leading_zeros())
}

/// Smallest power of two ≥ v (v ≥ 1).
#[inline]
pub fn pow2_ceil(v: u64) -> u64 {
    debug_assert!(v >= 1);
    v.next_power_of_two()
}
