//! Uniform slab grids.
//!
//! The slab `{-N < x1 < N}` is truncated transversally to `[-M, M]`. Axis 0 is
//! always `x1` and always carries the Dirichlet condition `psi = 1`; the
//! transverse axes are either Dirichlet-one as well or periodic.
//!
//! Samples are stored row-major with `x1` the slowest index. Dirichlet axes
//! include both end points, periodic axes hold `2M/h` samples starting at `-M`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the integrality of `N/h` and `M/h`.
pub const EXTENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransverseBc {
    DirichletOne,
    Periodic,
}

impl TransverseBc {
    pub fn code(self) -> u8 {
        match self {
            TransverseBc::DirichletOne => 0,
            TransverseBc::Periodic => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(TransverseBc::DirichletOne),
            1 => Some(TransverseBc::Periodic),
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("dimension must be 2 or 3, got {0}")]
    Dimension(usize),
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("half length N = {0} is below the minimum slab half width 4")]
    SlabTooNarrow(f64),
    #[error("{name}/h = {ratio} is not an integer (tolerance {EXTENT_TOL:e})")]
    NonIntegralExtent { name: &'static str, ratio: f64 },
}

/// Rectangular sample lattice over the truncated slab.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    half_length_x1: f64,
    half_length_transverse: f64,
    spacing: f64,
    counts: [usize; 3],
    bc_transverse: TransverseBc,
}

fn positive(name: &'static str, value: f64) -> Result<f64, GridError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(GridError::NonPositive { name, value })
    }
}

fn steps(name: &'static str, extent: f64, h: f64) -> Result<usize, GridError> {
    let ratio = extent / h;
    let rounded = ratio.round();
    if (ratio - rounded).abs() > EXTENT_TOL || rounded < 1.0 {
        return Err(GridError::NonIntegralExtent { name, ratio });
    }
    Ok(rounded as usize)
}

impl Grid {
    /// Builds a 2-D or 3-D slab grid; sample counts follow from the extents.
    pub fn new(
        dim: usize,
        half_length_x1: f64,
        half_length_transverse: f64,
        spacing: f64,
        bc_transverse: TransverseBc,
    ) -> Result<Self, GridError> {
        if !(2..=3).contains(&dim) {
            return Err(GridError::Dimension(dim));
        }
        let n = positive("N", half_length_x1)?;
        let m = positive("M", half_length_transverse)?;
        let h = positive("h", spacing)?;
        if n < 4.0 {
            return Err(GridError::SlabTooNarrow(n));
        }
        let nx = 2 * steps("N", n, h)? + 1;
        let mt = steps("M", m, h)?;
        let nt = match bc_transverse {
            TransverseBc::DirichletOne => 2 * mt + 1,
            TransverseBc::Periodic => 2 * mt,
        };
        let mut counts = [1; 3];
        counts[0] = nx;
        counts[1] = nt;
        if dim == 3 {
            counts[2] = nt;
        }
        Ok(Grid {
            dim,
            half_length_x1: n,
            half_length_transverse: m,
            spacing: h,
            counts,
            bc_transverse,
        })
    }

    /// A one-dimensional grid on `[-N, N]`, used for exact 1-D solutions and
    /// the conjugate-point spectra. Both ends are Dirichlet.
    pub fn line(half_length: f64, spacing: f64) -> Result<Self, GridError> {
        let n = positive("N", half_length)?;
        let h = positive("h", spacing)?;
        let nx = 2 * steps("N", n, h)? + 1;
        Ok(Grid {
            dim: 1,
            half_length_x1: n,
            half_length_transverse: 0.0,
            spacing: h,
            counts: [nx, 1, 1],
            bc_transverse: TransverseBc::DirichletOne,
        })
    }

    /// Rebuilds a grid from stored header values (counts are re-derived and
    /// must agree).
    pub fn from_header(
        dim: usize,
        counts: &[usize],
        spacing: f64,
        half_length_x1: f64,
        half_length_transverse: f64,
        bc_transverse: TransverseBc,
    ) -> Result<Self, GridError> {
        let grid = if dim == 1 {
            Grid::line(half_length_x1, spacing)?
        } else {
            Grid::new(dim, half_length_x1, half_length_transverse, spacing, bc_transverse)?
        };
        if grid.counts() != counts {
            return Err(GridError::NonIntegralExtent {
                name: "counts",
                ratio: f64::NAN,
            });
        }
        Ok(grid)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_length_x1(&self) -> f64 {
        self.half_length_x1
    }

    pub fn half_length_transverse(&self) -> f64 {
        self.half_length_transverse
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn bc_transverse(&self) -> TransverseBc {
        self.bc_transverse
    }

    /// Per-axis sample counts (length `dim`).
    pub fn counts(&self) -> &[usize] {
        &self.counts[..self.dim]
    }

    /// Counts padded with ones to three axes.
    pub fn counts3(&self) -> [usize; 3] {
        self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `h^d`, the volume of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    pub fn strides(&self) -> [usize; 3] {
        [self.counts[1] * self.counts[2], self.counts[2], 1]
    }

    pub fn is_periodic(&self, axis: usize) -> bool {
        axis > 0 && axis < self.dim && self.bc_transverse == TransverseBc::Periodic
    }

    /// Coordinate of sample `i` along `axis`.
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        if axis >= self.dim {
            return 0.0;
        }
        let half = if axis == 0 {
            self.half_length_x1
        } else {
            self.half_length_transverse
        };
        -half + i as f64 * self.spacing
    }

    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let s = self.strides();
        [idx / s[0], (idx / s[1]) % self.counts[1], idx % self.counts[2]]
    }

    pub fn ravel(&self, ii: [usize; 3]) -> usize {
        let s = self.strides();
        ii[0] * s[0] + ii[1] * s[1] + ii[2] * s[2]
    }

    /// Physical position of a sample (unused axes are 0).
    pub fn position(&self, idx: usize) -> [f64; 3] {
        let ii = self.unravel(idx);
        [self.coord(0, ii[0]), self.coord(1, ii[1]), self.coord(2, ii[2])]
    }

    /// True when the multi-index lies on a Dirichlet face.
    pub fn on_dirichlet_boundary(&self, ii: [usize; 3]) -> bool {
        (0..self.dim).any(|a| !self.is_periodic(a) && (ii[a] == 0 || ii[a] + 1 == self.counts[a]))
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        self.on_dirichlet_boundary(self.unravel(idx))
    }

    /// Neighbour of `ii` one step along `axis` in direction `dir` (±1).
    /// Returns `None` past a Dirichlet end.
    pub fn neighbor(&self, ii: [usize; 3], axis: usize, dir: isize) -> Option<[usize; 3]> {
        let n = self.counts[axis];
        let mut out = ii;
        if dir > 0 {
            if ii[axis] + 1 < n {
                out[axis] += 1;
            } else if self.is_periodic(axis) {
                out[axis] = 0;
            } else {
                return None;
            }
        } else if ii[axis] > 0 {
            out[axis] -= 1;
        } else if self.is_periodic(axis) {
            out[axis] = n - 1;
        } else {
            return None;
        }
        Some(out)
    }

    /// Quadrature weight of a sample: trapezoid on Dirichlet axes, rectangle
    /// on periodic ones.
    pub fn weight(&self, ii: [usize; 3]) -> f64 {
        let mut w = self.cell_volume();
        for a in 0..self.dim {
            if !self.is_periodic(a) && (ii[a] == 0 || ii[a] + 1 == self.counts[a]) {
                w *= 0.5;
            }
        }
        w
    }

    /// Indices of all samples not on a Dirichlet face, in storage order.
    pub fn interior_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_boundary(i)).collect()
    }

    /// Visits every sample off the Dirichlet faces in storage order, passing
    /// its index and the `(forward, backward)` neighbour indices per axis.
    /// Unused axes report the point itself.
    pub fn for_each_interior<F: FnMut(usize, &[(usize, usize); 3])>(&self, mut f: F) {
        let [n0, n1, n2] = self.counts;
        let s = self.strides();
        let range = |a: usize, n: usize| {
            if a < self.dim && !self.is_periodic(a) {
                1..n.saturating_sub(1)
            } else {
                0..n
            }
        };
        let step = |a: usize, i: usize, n: usize, idx: usize| -> (usize, usize) {
            if a >= self.dim {
                return (idx, idx);
            }
            let up = if i + 1 < n { idx + s[a] } else { idx - s[a] * (n - 1) };
            let dn = if i > 0 { idx - s[a] } else { idx + s[a] * (n - 1) };
            (up, dn)
        };
        for i0 in range(0, n0) {
            for i1 in range(1, n1) {
                for i2 in range(2, n2) {
                    let idx = i0 * s[0] + i1 * s[1] + i2;
                    let nb = [
                        step(0, i0, n0, idx),
                        step(1, i1, n1, idx),
                        step(2, i2, n2, idx),
                    ];
                    f(idx, &nb);
                }
            }
        }
    }

    /// Number of samples not on a Dirichlet face.
    pub fn interior_len(&self) -> usize {
        (0..self.dim)
            .map(|a| {
                if self.is_periodic(a) {
                    self.counts[a]
                } else {
                    self.counts[a].saturating_sub(2)
                }
            })
            .product()
    }
}
