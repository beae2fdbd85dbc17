//! Linear algebra on grid vectors.
//!
//! A grid vector is a full-length `[Complex64]` slice whose Dirichlet-face
//! entries are zero; it is treated as a real vector of twice the length with
//! the inner product `sum Re(a conj b)`.

pub mod inertia;
pub mod krylov;
pub mod poisson;

use num_complex::Complex64;

use crate::reduce::pairwise_sum_by;

/// A real-linear operator on grid vectors.
pub trait LinearOperator {
    fn apply(&self, x: &[Complex64], y: &mut [Complex64]);
}

impl LinearOperator for crate::functionals::Hessian {
    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        self.apply_raw(x, y)
    }
}

/// `sum Re(a conj b)`, pairwise-summed.
pub fn dot(a: &[Complex64], b: &[Complex64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    pairwise_sum_by(a.len(), |i| a[i].re * b[i].re + a[i].im * b[i].im)
}

pub fn norm(a: &[Complex64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += t x`.
pub fn axpy(t: f64, x: &[Complex64], y: &mut [Complex64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += xi * t;
    }
}

pub fn scale(t: f64, x: &mut [Complex64]) {
    for xi in x.iter_mut() {
        *xi *= t;
    }
}
