// SPDX-License-Identifier: Apache-2.0

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::normal::inverse_normal_cdf;
use crate::error::{Error, Result};

pub const DEFAULT_RESERVOIR: usize = 1024;

/// Bounded, sorted uniform sample of a value stream.
///
/// Once more than `capacity` values have been seen, each new value replaces a
/// random member with probability `capacity / seen` (reservoir sampling), so
/// the reservoir stays a uniform sample of everything observed. The sampling
/// generator is seeded, making the state a deterministic function of the seed
/// and the input sequence.
#[derive(Debug, Clone)]
pub struct QuantileState {
    capacity: usize,
    seen: u64,
    sorted: Vec<f64>,
    rng: ChaCha8Rng,
}

impl QuantileState {
    pub fn new(capacity: usize, seed: u64) -> Self {
        assert!(capacity > 0, "reservoir capacity must be positive");
        QuantileState {
            capacity,
            seen: 0,
            sorted: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total number of observations, including those not retained.
    pub fn count(&self) -> u64 {
        self.seen
    }

    pub fn reservoir(&self) -> &[f64] {
        &self.sorted
    }

    pub fn observe(&mut self, x: f64) -> Result<()> {
        if !x.is_finite() {
            return Err(Error::NonfiniteValue(x));
        }
        self.seen += 1;
        if self.sorted.len() < self.capacity {
            self.insert_sorted(x);
        } else {
            let j = self.rng.gen_range(0..self.seen);
            if (j as usize) < self.capacity {
                // The reservoir is sorted, so position j is still a uniformly
                // chosen member.
                self.sorted.remove(j as usize);
                self.insert_sorted(x);
            }
        }
        Ok(())
    }

    fn insert_sorted(&mut self, x: f64) {
        let at = self.sorted.partition_point(|v| *v <= x);
        self.sorted.insert(at, x);
    }

    /// Mid-rank empirical CDF: `(#{v < x} + #{v == x} / 2) / n`.
    pub fn empirical_cdf(&self, x: f64) -> Option<f64> {
        if self.sorted.is_empty() {
            return None;
        }
        let less = self.sorted.partition_point(|v| *v < x);
        let leq = self.sorted.partition_point(|v| *v <= x);
        Some((less as f64 + 0.5 * (leq - less) as f64) / self.sorted.len() as f64)
    }

    /// Piecewise-linear quantile through the points `((i - 0.5) / n, x_(i))`,
    /// constant beyond the first and last order statistic.
    pub fn quantile(&self, p: f64) -> Option<f64> {
        let n = self.sorted.len();
        if n == 0 || !(0.0..=1.0).contains(&p) {
            return None;
        }
        let h = (n as f64 * p + 0.5).clamp(1.0, n as f64);
        let lo = h.floor() as usize;
        let frac = h - lo as f64;
        let a = self.sorted[lo - 1];
        if lo == n || frac == 0.0 {
            return Some(a);
        }
        Some(a + frac * (self.sorted[lo] - a))
    }

    pub fn median(&self) -> Option<f64> {
        self.quantile(0.5)
    }

    pub fn iqr(&self) -> Option<f64> {
        Some(self.quantile(0.75)? - self.quantile(0.25)?)
    }
}

/// Maps `x` onto the standard normal through its empirical quantile in the
/// reservoir. The quantile is clamped to `[1/(2n), 1 - 1/(2n)]` so the result
/// is always finite.
pub fn gaussian_map(x: f64, state: &QuantileState) -> Result<f64> {
    if state.count() < 2 || state.reservoir().len() < 2 {
        return Err(Error::InsufficientState(state.count()));
    }
    if x.is_nan() {
        return Err(Error::NonfiniteValue(x));
    }
    let n = state.reservoir().len() as f64;
    let p = state
        .empirical_cdf(x)
        .expect("non-empty reservoir")
        .clamp(0.5 / n, 1.0 - 0.5 / n);
    Ok(inverse_normal_cdf(p))
}
