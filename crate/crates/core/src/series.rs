//! Uniform time grids and real-valued series sampled on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `t_k = k * dt` for `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidGrid(format!("dt must be positive and finite, got {dt}")));
        }
        if n_steps == 0 {
            return Err(Error::InvalidGrid("n_steps must be at least 1".into()));
        }
        Ok(Self { dt, n_steps })
    }

    /// Grid covering `[0, horizon]` with `n_steps` intervals.
    pub fn spanning(horizon: f64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::InvalidGrid("n_steps must be at least 1".into()));
        }
        Self::new(horizon / n_steps as f64, n_steps)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of nodes, `n_steps + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.t(self.n_steps)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |k| self.t(k))
    }

    /// Grid with half the spacing over the same horizon.
    pub fn refined(&self) -> Self {
        Self { dt: self.dt / 2.0, n_steps: self.n_steps * 2 }
    }

    pub fn same_as(&self, other: &TimeGrid) -> bool {
        self.n_steps == other.n_steps && (self.dt - other.dt).abs() <= 1e-12 * self.dt
    }

    pub fn ensure_same(&self, other: &TimeGrid) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "(dt {}, steps {}) vs (dt {}, steps {})",
                self.dt, self.n_steps, other.dt, other.n_steps
            )))
        }
    }
}

/// Real values at every node of a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarSeries {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl ScalarSeries {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), found: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "series values" });
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.times().map(f).collect())
    }

    pub fn constant(grid: TimeGrid, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.len()])
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|v| v * factor).collect())
    }

    /// Maximum absolute pointwise difference. Grids must match.
    pub fn max_abs_diff(&self, other: &ScalarSeries) -> Result<f64> {
        self.grid.ensure_same(&other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Restriction to the first `n_steps` intervals.
    pub fn truncated(&self, n_steps: usize) -> Result<Self> {
        if n_steps > self.grid.n_steps {
            return Err(Error::SeriesTooShort { needed: n_steps, found: self.grid.n_steps });
        }
        Self::new(TimeGrid::new(self.grid.dt, n_steps)?, self.values[..=n_steps].to_vec())
    }
}

impl std::ops::Index<usize> for ScalarSeries {
    type Output = f64;

    fn index(&self, k: usize) -> &f64 {
        &self.values[k]
    }
}

/// Pairwise (cascade) summation with a fixed split order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}
