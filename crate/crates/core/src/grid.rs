//! Uniform time grids.

use crate::error::{require, Result};

/// A uniform time grid `t0 + j·dt`, `j = 0..n-1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    dt: f64,
    n: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, n: usize) -> Result<Self> {
        require(t0.is_finite(), "t0", t0, "finite")?;
        require(dt.is_finite() && dt > 0.0, "dt", dt, "finite and > 0")?;
        require(n >= 1, "n", n as f64, ">= 1")?;
        Ok(Self { t0, dt, n })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The `j`-th grid time.
    pub fn t(&self, j: usize) -> f64 {
        debug_assert!(j < self.n);
        self.t0 + j as f64 * self.dt
    }

    /// Total span `(n-1)·dt`.
    pub fn span(&self) -> f64 {
        (self.n - 1) as f64 * self.dt
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_points_are_strictly_increasing() {
        let g = TimeGrid::new(-3.0, 0.25, 9).unwrap();
        for j in 1..g.len() {
            assert!(g.t(j) > g.t(j - 1));
        }
        assert_eq!(g.t(0), -3.0);
        assert_eq!(g.span(), 2.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(TimeGrid::new(0.0, 0.0, 4).is_err());
        assert!(TimeGrid::new(0.0, -1.0, 4).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0).is_err());
        assert!(TimeGrid::new(f64::NAN, 1.0, 4).is_err());
    }
}
