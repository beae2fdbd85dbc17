//! Complex fields on a [`Grid`] and the finite-difference operators acting on
//! them.

use num_complex::Complex64;
use thiserror::Error;

use crate::grid::Grid;
use crate::reduce::pairwise_sum_by;

const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FieldError {
    #[error("expected {expected} samples, got {got}")]
    Length { expected: usize, got: usize },
    #[error("fields live on different grids")]
    GridMismatch,
}

/// Complex samples `psi = u + i v` on every grid point, boundary included.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<Complex64>,
}

/// Real samples on every grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self, FieldError> {
        if values.len() != grid.len() {
            return Err(FieldError::Length {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Field { grid, values })
    }

    pub fn constant(grid: &Grid, value: Complex64) -> Self {
        Field {
            values: vec![value; grid.len()],
            grid: grid.clone(),
        }
    }

    /// The trivial solution `psi = 1`.
    pub fn ones(grid: &Grid) -> Self {
        Self::constant(grid, ONE)
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, ZERO)
    }

    /// Samples `f` at every grid position.
    pub fn from_fn<F: Fn([f64; 3]) -> Complex64>(grid: &Grid, f: F) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.position(i))).collect();
        Field {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn same_grid(&self, other: &Field) -> Result<(), FieldError> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(FieldError::GridMismatch)
        }
    }

    pub fn conj(&self) -> Field {
        self.map(|z| z.conj())
    }

    pub fn map<F: Fn(Complex64) -> Complex64>(&self, f: F) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn modulus(&self) -> RealField {
        RealField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|z| z.norm()).collect(),
        }
    }

    /// `max |psi|`.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// Max modulus over points off the Dirichlet faces.
    pub fn interior_max_abs(&self) -> f64 {
        let g = &self.grid;
        (0..g.len())
            .filter(|&i| !g.is_boundary(i))
            .fold(0.0, |m, i| m.max(self.values[i].norm()))
    }

    /// `self + t * other`, elementwise.
    pub fn axpy(&self, t: f64, other: &Field) -> Field {
        debug_assert_eq!(self.grid, other.grid);
        Field {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b * t)
                .collect(),
        }
    }

    /// `(1 - t) * self + t * other`.
    pub fn lerp(&self, other: &Field, t: f64) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * (1.0 - t) + b * t)
                .collect(),
        }
    }

    /// True when every Dirichlet-face sample equals exactly `1 + 0i`.
    pub fn satisfies_boundary_condition(&self) -> bool {
        let g = &self.grid;
        (0..g.len()).all(|i| !g.is_boundary(i) || self.values[i] == ONE)
    }

    /// True when every Dirichlet-face sample is exactly zero (admissible
    /// perturbation direction).
    pub fn vanishes_on_boundary(&self) -> bool {
        let g = &self.grid;
        (0..g.len()).all(|i| !g.is_boundary(i) || self.values[i] == ZERO)
    }

    /// Sets every Dirichlet-face sample to `value`.
    pub fn set_boundary(&mut self, value: Complex64) {
        for i in 0..self.grid.len() {
            if self.grid.is_boundary(i) {
                self.values[i] = value;
            }
        }
    }
}

impl RealField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != grid.len() {
            return Err(FieldError::Length {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(RealField { grid, values })
    }

    pub fn from_fn<F: Fn([f64; 3]) -> f64>(grid: &Grid, f: F) -> Self {
        RealField {
            values: (0..grid.len()).map(|i| f(grid.position(i))).collect(),
            grid: grid.clone(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// The field as a complex field with zero imaginary part.
    pub fn to_complex(&self) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }
}

/// Quadrature of a real density: trapezoid on Dirichlet axes, rectangle rule
/// on periodic axes, pairwise-summed in storage order.
pub fn integrate(density: &RealField) -> f64 {
    integrate_with(&density.grid, |i| density.values[i])
}

/// Quadrature of `density(idx)` over all samples of `grid`.
pub fn integrate_with<F: Fn(usize) -> f64>(grid: &Grid, density: F) -> f64 {
    pairwise_sum_by(grid.len(), |i| grid.weight(grid.unravel(i)) * density(i))
}

/// Value at the neighbour of `ii`, with the Dirichlet ghost value 1 past the
/// ends of Dirichlet axes.
#[inline]
fn neighbor_or_one(f: &Field, ii: [usize; 3], axis: usize, dir: isize) -> Complex64 {
    match f.grid.neighbor(ii, axis, dir) {
        Some(nb) => f.values[f.grid.ravel(nb)],
        None => ONE,
    }
}

/// Derivative along `axis`: centered differences inside, one-sided
/// second-order differences on Dirichlet ends, wrap-around on periodic axes.
pub fn partial(f: &Field, axis: usize) -> Field {
    let g = &f.grid;
    let n = g.counts3()[axis];
    let stride = g.strides()[axis];
    let inv2h = 0.5 / g.spacing();
    let v = &f.values;
    let mut out = vec![ZERO; g.len()];
    if axis >= g.dim() || n < 2 {
        return Field {
            grid: g.clone(),
            values: out,
        };
    }
    let periodic = g.is_periodic(axis);
    for (idx, o) in out.iter_mut().enumerate() {
        let i = g.unravel(idx)[axis];
        *o = if periodic {
            let up = if i + 1 < n { idx + stride } else { idx - stride * (n - 1) };
            let dn = if i > 0 { idx - stride } else { idx + stride * (n - 1) };
            (v[up] - v[dn]) * inv2h
        } else if n < 3 {
            (v[idx - i * stride + stride] - v[idx - i * stride]) * (2.0 * inv2h)
        } else if i == 0 {
            (v[idx] * -3.0 + v[idx + stride] * 4.0 - v[idx + 2 * stride]) * inv2h
        } else if i + 1 == n {
            (v[idx] * 3.0 - v[idx - stride] * 4.0 + v[idx - 2 * stride]) * inv2h
        } else {
            (v[idx + stride] - v[idx - stride]) * inv2h
        };
    }
    Field {
        grid: g.clone(),
        values: out,
    }
}

/// Gradient: one derivative field per axis.
pub fn gradient(f: &Field) -> Vec<Field> {
    (0..f.grid.dim()).map(|a| partial(f, a)).collect()
}

/// Forward difference `(f(x + h e_axis) - f(x)) / h`; zero on the last
/// sample of a Dirichlet axis where no forward edge exists.
pub fn forward_difference(f: &Field, axis: usize) -> Field {
    let g = &f.grid;
    let inv_h = 1.0 / g.spacing();
    let mut out = vec![ZERO; g.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        let ii = g.unravel(idx);
        if let Some(nb) = g.neighbor(ii, axis, 1) {
            *o = (f.values[g.ravel(nb)] - f.values[idx]) * inv_h;
        }
    }
    Field {
        grid: g.clone(),
        values: out,
    }
}

/// Standard (2d+1)-point Laplacian. Past a Dirichlet end the ghost value is 1,
/// periodic axes wrap.
pub fn laplacian(f: &Field) -> Field {
    let g = &f.grid;
    let inv_h2 = 1.0 / (g.spacing() * g.spacing());
    let mut out = vec![ZERO; g.len()];
    let [n0, n1, n2] = g.counts3();
    let dim = g.dim();
    let mut idx = 0;
    for i0 in 0..n0 {
        for i1 in 0..n1 {
            for i2 in 0..n2 {
                let ii = [i0, i1, i2];
                let c = f.values[idx];
                let mut acc = ZERO;
                for axis in 0..dim {
                    acc += neighbor_or_one(f, ii, axis, 1) + neighbor_or_one(f, ii, axis, -1)
                        - c * 2.0;
                }
                out[idx] = acc * inv_h2;
                idx += 1;
            }
        }
    }
    Field {
        grid: g.clone(),
        values: out,
    }
}
