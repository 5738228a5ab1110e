//! Uniform periodic grids on a torus of dimension one to three.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniform grid on the torus `[0, extent_0) x ... x [0, extent_{dim-1})`.
///
/// Fields on the grid are flat `Vec<f64>` in row-major order, the last axis
/// being contiguous. Unused axes (beyond `dim`) carry one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicGrid {
    pub dim: usize,
    pub extent: [f64; 3],
    pub points: [usize; 3],
    pub dealias: f64,
}

impl PeriodicGrid {
    /// Cubic grid with the same side length and resolution along every axis.
    pub fn cube(dim: usize, extent: f64, points: usize) -> Result<Self> {
        let mut e = [1.0; 3];
        let mut n = [1; 3];
        for a in 0..dim.min(3) {
            e[a] = extent;
            n[a] = points;
        }
        Self::new(dim, e, n, 2.0 / 3.0)
    }

    pub fn new(dim: usize, extent: [f64; 3], points: [usize; 3], dealias: f64) -> Result<Self> {
        let g = PeriodicGrid {
            dim,
            extent,
            points,
            dealias,
        };
        g.validate()?;
        Ok(g)
    }

    /// The default desk-scale grid: 2D, side 2π, 64 points per axis.
    pub fn default_2d() -> Self {
        Self::cube(2, 2.0 * std::f64::consts::PI, 64).expect("default grid is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(1..=3).contains(&self.dim) {
            errs.push(format!("dim must be 1, 2 or 3, got {}", self.dim));
        }
        for a in 0..self.dim.min(3) {
            let n = self.points[a];
            if n < 8 || n % 2 != 0 {
                errs.push(format!("axis {a}: points must be even and >= 8, got {n}"));
            }
            if !(self.extent[a] > 0.0 && self.extent[a].is_finite()) {
                errs.push(format!("axis {a}: extent must be positive, got {}", self.extent[a]));
            }
        }
        for a in self.dim.min(3)..3 {
            if self.points[a] != 1 {
                errs.push(format!("axis {a} is beyond dim and must have one point"));
            }
        }
        if !(self.dealias > 0.0 && self.dealias <= 1.0) {
            errs.push(format!("dealias fraction must lie in (0,1], got {}", self.dealias));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|a| self.extent[a]).product()
    }

    /// Volume of one grid cell.
    pub fn cell_volume(&self) -> f64 {
        self.volume() / self.len() as f64
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extent[axis] / self.points[axis] as f64
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dim)
            .map(|a| self.spacing(a))
            .fold(f64::INFINITY, f64::min)
    }

    /// Row-major strides.
    pub fn strides(&self) -> [usize; 3] {
        [self.points[1] * self.points[2], self.points[2], 1]
    }

    /// Multi-index of a flat index.
    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let s = self.strides();
        [idx / s[0], (idx / s[1]) % self.points[1], idx % self.points[2]]
    }

    pub fn ravel(&self, ix: [usize; 3]) -> usize {
        let s = self.strides();
        ix[0] * s[0] + ix[1] * s[1] + ix[2]
    }

    /// Physical coordinates of a grid point.
    pub fn coords(&self, idx: usize) -> [f64; 3] {
        let ix = self.unravel(idx);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = ix[a] as f64 * self.spacing(a);
        }
        x
    }

    /// Signed integer mode number of index `j` along `axis`
    /// (`0, 1, .., n/2-1, -n/2, .., -1`).
    pub fn mode_index(&self, axis: usize, j: usize) -> i64 {
        let n = self.points[axis];
        if j < n / 2 {
            j as i64
        } else {
            j as i64 - n as i64
        }
    }

    /// Largest retained integer mode per axis under the dealias rule.
    pub fn dealias_cutoff(&self, axis: usize) -> i64 {
        (self.dealias * (self.points[axis] / 2) as f64).floor() as i64
    }

    /// Evaluate a function at every grid point.
    pub fn sample(&self, f: impl Fn([f64; 3]) -> f64) -> Vec<f64> {
        (0..self.len()).map(|i| f(self.coords(i))).collect()
    }

    /// Same grid with every axis refined by an integer factor.
    pub fn refined(&self, factor: usize) -> Self {
        let mut g = *self;
        for a in 0..self.dim {
            g.points[a] *= factor;
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_odd_or_tiny_axes() {
        assert!(PeriodicGrid::cube(2, 1.0, 7).is_err());
        assert!(PeriodicGrid::cube(2, 1.0, 6).is_err());
        assert!(PeriodicGrid::cube(2, 1.0, 8).is_ok());
        assert!(PeriodicGrid::cube(4, 1.0, 8).is_err());
    }

    #[test]
    fn ravel_round_trip() {
        let g = PeriodicGrid::new(3, [1.0, 2.0, 3.0], [8, 10, 12], 1.0).unwrap();
        for i in [0, 1, 17, 500, g.len() - 1] {
            assert_eq!(g.ravel(g.unravel(i)), i);
        }
    }

    #[test]
    fn mode_indices_are_symmetric_lattice() {
        let g = PeriodicGrid::cube(1, 1.0, 8).unwrap();
        let m: Vec<i64> = (0..8).map(|j| g.mode_index(0, j)).collect();
        assert_eq!(m, vec![0, 1, 2, 3, -4, -3, -2, -1]);
        let g64 = PeriodicGrid::default_2d();
        assert_eq!(g64.dealias_cutoff(0), 21);
    }
}
