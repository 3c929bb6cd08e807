use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform partition of `[0, T]` into `steps` intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if steps < 1 {
            return Err(Error::EmptyGrid);
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step_size(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Node `i`; `node(0) == 0` and `node(steps) == T` exactly.
    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i <= self.steps);
        self.horizon * (i as f64 / self.steps as f64)
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(move |i| self.node(i))
    }

    /// Same horizon with `factor` times as many intervals.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            horizon: self.horizon,
            steps: self.steps * factor.max(1),
        }
    }

    /// Index of the node nearest to `t` (clamped to the grid).
    pub fn nearest_node(&self, t: f64) -> usize {
        let x = (t / self.horizon * self.steps as f64).round();
        x.clamp(0.0, self.steps as f64) as usize
    }

    /// Locate `t` as `(i, w)` with `t = (1 - w) t_i + w t_{i+1}`.
    ///
    /// At a node the weight is exactly zero, and `t = T` maps to the last
    /// interval with `w = 1`.
    pub(crate) fn locate(&self, t: f64) -> Result<(usize, f64)> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::OutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        let h = self.step_size();
        let mut i = ((t / h).floor() as usize).min(self.steps - 1);
        // floor can land one interval off near nodes because of rounding
        if t < self.node(i) {
            i -= 1;
        } else if i + 1 < self.steps && t >= self.node(i + 1) {
            i += 1;
        }
        let lo = self.node(i);
        let w = if t == lo {
            0.0
        } else {
            (t - lo) / (self.node(i + 1) - lo)
        };
        Ok((i, w))
    }
}
