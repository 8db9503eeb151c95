//! Uniform grids in position and phase space.

use crate::error::{invalid, Result};

/// Uniform partition `x_k = x_min + k dx`, `k = 0..=N`, of `[x_min, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    x_min: f64,
    x_max: f64,
    intervals: usize,
}

impl SpatialGrid {
    pub fn new(x_min: f64, x_max: f64, intervals: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) || x_min >= x_max {
            return Err(invalid(
                "grid",
                format!("need finite x_min < x_max, got [{x_min}, {x_max}]"),
            ));
        }
        if intervals < 2 {
            return Err(invalid("grid", format!("need at least 2 intervals, got {intervals}")));
        }
        Ok(Self {
            x_min,
            x_max,
            intervals,
        })
    }

    /// Symmetric grid `[-half_width, half_width]`.
    pub fn symmetric(half_width: f64, intervals: usize) -> Result<Self> {
        Self::new(-half_width, half_width, intervals)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    /// Number of intervals `N`.
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    /// Number of nodes `N + 1`.
    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.intervals as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        debug_assert!(k <= self.intervals);
        if k == self.intervals {
            self.x_max
        } else {
            self.x_min + k as f64 * self.dx()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.node(k)).collect()
    }

    /// Trapezoidal weights: `dx` inside, `dx / 2` at both ends.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let dx = self.dx();
        let mut w = vec![dx; self.len()];
        w[0] *= 0.5;
        w[self.intervals] *= 0.5;
        w
    }

    /// Largest `|x|` on the grid.
    pub fn max_abs(&self) -> f64 {
        self.x_min.abs().max(self.x_max.abs())
    }

    /// The same interval with twice as many subintervals.
    pub fn refined(&self) -> Self {
        Self {
            intervals: 2 * self.intervals,
            ..*self
        }
    }
}

/// Tensor grid over `(x, p)` with the product trapezoidal rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSpaceGrid {
    pub x: SpatialGrid,
    pub p: SpatialGrid,
}

impl PhaseSpaceGrid {
    pub fn new(x: SpatialGrid, p: SpatialGrid) -> Self {
        Self { x, p }
    }

    /// Square grid `[-h, h]^2` with `intervals` subintervals per axis.
    pub fn square(half_width: f64, intervals: usize) -> Result<Self> {
        let g = SpatialGrid::symmetric(half_width, intervals)?;
        Ok(Self { x: g, p: g })
    }

    pub fn len(&self) -> usize {
        self.x.len() * self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Product weights `w_kl = wx_k * wp_l`, row-major in `k`.
    pub fn weights(&self) -> Vec<f64> {
        let wx = self.x.trapezoid_weights();
        let wp = self.p.trapezoid_weights();
        wx.iter()
            .flat_map(|a| wp.iter().map(move |b| a * b))
            .collect()
    }

    pub fn area(&self) -> f64 {
        (self.x.x_max() - self.x.x_min()) * (self.p.x_max() - self.p.x_min())
    }

    pub fn refined(&self) -> Self {
        Self {
            x: self.x.refined(),
            p: self.p.refined(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::pairwise_sum;

    #[test]
    fn nodes_hit_both_endpoints() {
        let g = SpatialGrid::new(-6.0, 6.0, 751).unwrap();
        assert_eq!(g.len(), 752);
        assert_eq!(g.node(0), -6.0);
        assert_eq!(g.node(751), 6.0);
        assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(SpatialGrid::new(1.0, 1.0, 10).is_err());
        assert!(SpatialGrid::new(2.0, 1.0, 10).is_err());
        assert!(SpatialGrid::new(0.0, 1.0, 1).is_err());
        assert!(SpatialGrid::new(0.0, f64::NAN, 4).is_err());
    }

    #[test]
    fn phase_weights_sum_to_area() {
        let g = PhaseSpaceGrid::new(
            SpatialGrid::new(-4.5, 4.5, 200).unwrap(),
            SpatialGrid::new(-3.0, 5.0, 77).unwrap(),
        );
        let total = pairwise_sum(&g.weights());
        assert!((total - g.area()).abs() < 1e-12 * g.area());
    }
}
