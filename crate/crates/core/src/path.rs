use alloc::vec::Vec;

use crate::sum::KahanSum;

/// A uniformly sampled trajectory.
///
/// `values[k]` is the state at `t0 + k * dt`. The first `burn_in` values
/// belong to the warm-up period and are excluded by [`SamplePath::sampled`].
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
    pub burn_in: usize,
    /// Master seed and stream index the path was drawn from.
    pub seed: u64,
    pub stream: u64,
}

impl SamplePath {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>, burn_in: usize, seed: u64, stream: u64) -> Self {
        Self { t0, dt, values, burn_in, seed, stream }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    /// Values after the burn-in marker.
    pub fn sampled(&self) -> &[f64] {
        &self.values[self.burn_in.min(self.values.len())..]
    }

    /// `(t, value)` pairs after burn-in.
    pub fn sampled_points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let start = self.burn_in.min(self.values.len());
        self.values[start..].iter().enumerate().map(move |(i, &v)| (self.time(start + i), v))
    }

    /// Means over consecutive windows of `window` days, post burn-in.
    /// Returns `(window start time, mean)`; a trailing partial window is
    /// dropped.
    pub fn window_means(&self, window: f64) -> Vec<(f64, f64)> {
        let per = libm::round(window / self.dt) as usize;
        if per == 0 {
            return Vec::new();
        }
        let start = self.burn_in.min(self.values.len());
        self.values[start..]
            .chunks_exact(per)
            .enumerate()
            .map(|(w, c)| {
                let s: KahanSum = c.iter().copied().collect();
                (self.time(start + w * per), s.value() / per as f64)
            })
            .collect()
    }
}
