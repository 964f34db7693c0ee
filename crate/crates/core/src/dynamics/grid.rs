use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `t_i = T_minus + i * dt`, `i = 0..n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_minus: f64,
    pub t_plus: f64,
    pub n: usize,
}

impl TimeGrid {
    pub fn new(t_minus: f64, t_plus: f64, n: usize) -> Result<Self> {
        if n < 4 {
            return Err(Error::Parameter(format!("grid needs at least 4 nodes, got {n}")));
        }
        if !(t_plus > t_minus) || !t_minus.is_finite() || !t_plus.is_finite() {
            return Err(Error::Parameter(format!("bad grid interval [{t_minus}, {t_plus}]")));
        }
        Ok(Self { t_minus, t_plus, n })
    }

    /// Symmetric grid on `[-t, t]`.
    pub fn symmetric(t: f64, n: usize) -> Result<Self> {
        Self::new(-t, t, n)
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        (self.t_plus - self.t_minus) / (self.n - 1) as f64
    }

    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.t_plus
        } else {
            self.t_minus + i as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.time(i)).collect()
    }

    /// Index of the node nearest to `t`, clamped to the grid.
    pub fn nearest(&self, t: f64) -> usize {
        let r = ((t - self.t_minus) / self.dt()).round();
        r.clamp(0.0, (self.n - 1) as f64) as usize
    }

    /// Sub-grid over nodes `i0..=i1`.
    pub fn sub(&self, i0: usize, i1: usize) -> Self {
        assert!(i0 < i1 && i1 < self.n);
        Self { t_minus: self.time(i0), t_plus: self.time(i1), n: i1 - i0 + 1 }
    }
}

/// States on a [`TimeGrid`], stored row-major (`n * dim`).
#[derive(Clone, Debug, PartialEq)]
pub struct GridTrajectory {
    pub grid: TimeGrid,
    pub dim: usize,
    pub states: Vec<f64>,
}

impl GridTrajectory {
    pub fn new(grid: TimeGrid, dim: usize, states: Vec<f64>) -> Self {
        assert_eq!(states.len(), grid.n * dim, "state count must match grid");
        Self { grid, dim, states }
    }

    pub fn constant(grid: TimeGrid, x: &[f64]) -> Self {
        let mut states = Vec::with_capacity(grid.n * x.len());
        for _ in 0..grid.n {
            states.extend_from_slice(x);
        }
        Self::new(grid, x.len(), states)
    }

    #[inline]
    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn len(&self) -> usize {
        self.grid.n
    }

    pub fn is_empty(&self) -> bool {
        self.grid.n == 0
    }

    pub fn slice(&self, i0: usize, i1: usize) -> Self {
        Self::new(self.grid.sub(i0, i1), self.dim, self.states[i0 * self.dim..(i1 + 1) * self.dim].to_vec())
    }

    /// Linear interpolation in time; `None` outside the grid.
    pub fn interpolate(&self, t: f64) -> Option<Vec<f64>> {
        let g = &self.grid;
        let eps = 1e-12 * (g.t_plus - g.t_minus);
        if t < g.t_minus - eps || t > g.t_plus + eps {
            return None;
        }
        let s = ((t - g.t_minus) / g.dt()).clamp(0.0, (g.n - 1) as f64);
        let i = (s.floor() as usize).min(g.n - 2);
        let w = s - i as f64;
        let (a, b) = (self.state(i), self.state(i + 1));
        Some(a.iter().zip(b).map(|(p, q)| (1.0 - w) * p + w * q).collect())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.states.iter().zip(&other.states).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_hit_endpoints() {
        let g = TimeGrid::symmetric(15.0, 601).unwrap();
        assert_eq!(g.time(0), -15.0);
        assert_eq!(g.time(600), 15.0);
        assert!((g.dt() - 0.05).abs() < 1e-15);
        assert_eq!(g.nearest(0.0), 300);
        assert!(g.time(300).abs() < 1e-12);
    }

    #[test]
    fn rejects_short_grids() {
        assert!(TimeGrid::new(0.0, 1.0, 3).is_err());
        assert!(TimeGrid::new(1.0, 0.0, 10).is_err());
    }

    #[test]
    fn interpolation_is_linear() {
        let g = TimeGrid::new(0.0, 3.0, 4).unwrap();
        let tr = GridTrajectory::new(g, 1, vec![0.0, 1.0, 4.0, 9.0]);
        assert_eq!(tr.interpolate(1.5).unwrap(), vec![2.5]);
        assert!(tr.interpolate(3.5).is_none());
    }
}
