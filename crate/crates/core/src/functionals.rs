//! Energy, momentum, Lagrangian, Euler-Lagrange residual and second variation
//! on discrete fields.
//!
//! The discrete Lagrangian is
//!
//! ```text
//! I_h = h^d sum_edges 1/2 |D+ psi|^2 + Q[1/4 (1 - |psi|^2)^2] + c Q[D0_1 v (u - 1)]
//! ```
//!
//! where `Q` is the grid quadrature and `D0_1` the x1 derivative of
//! [`crate::field::partial`]. For fields equal to 1 on the Dirichlet faces its
//! gradient with respect to the interior samples is exactly `-h^d` times
//! [`el_residual`], and its second derivative is exactly the form evaluated by
//! [`hessian_quadratic`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{integrate_with, partial, Field};
use crate::grid::Grid;
use crate::reduce::pairwise_sum_by;
use crate::SOUND_SPEED;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FunctionalError {
    #[error("speed c = {0} is outside the subsonic range (0, sqrt 2)")]
    NotSubsonic(f64),
    #[error("test field does not vanish on the Dirichlet boundary")]
    BoundaryNotZero,
    #[error("fields live on different grids")]
    GridMismatch,
}

/// Traveling speed, validated to the subsonic range by [`Speed::subsonic`].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Speed(f64);

impl Speed {
    pub fn subsonic(c: f64) -> Result<Self, FunctionalError> {
        if c.is_finite() && c > 0.0 && c < SOUND_SPEED {
            Ok(Speed(c))
        } else {
            Err(FunctionalError::NotSubsonic(c))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// The scalar functionals of one field at one speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub energy: f64,
    pub momentum: f64,
    pub lagrangian: f64,
    /// `A = 1/2 sum_{j >= 2} int |d_j psi|^2`.
    #[serde(rename = "transverse_A")]
    pub transverse_a: f64,
    /// `B = 1/2 int |d_1 psi|^2 + 1/4 int (1 - |psi|^2)^2 - c P`.
    #[serde(rename = "longitudinal_B")]
    pub longitudinal_b: f64,
    pub c: f64,
}

/// Kinetic energy `1/2 h^d sum |D+ psi|^2` over forward edges along the
/// requested axes.
fn kinetic(f: &Field, axes: std::ops::Range<usize>) -> f64 {
    let g = f.grid();
    let v = f.values();
    let inv_h2 = 1.0 / (g.spacing() * g.spacing());
    let scale = 0.5 * g.cell_volume() * inv_h2;
    let counts = g.counts3();
    let strides = g.strides();
    let axes: Vec<usize> = axes.filter(|&a| a < g.dim()).collect();
    scale
        * pairwise_sum_by(g.len(), |idx| {
            let ii = g.unravel(idx);
            let mut acc = 0.0;
            for &a in &axes {
                let n = counts[a];
                let nb = if ii[a] + 1 < n {
                    idx + strides[a]
                } else if g.is_periodic(a) {
                    idx - strides[a] * (n - 1)
                } else {
                    continue;
                };
                acc += (v[nb] - v[idx]).norm_sqr();
            }
            acc
        })
}

fn potential(f: &Field) -> f64 {
    let v = f.values();
    integrate_with(f.grid(), |i| {
        let s = 1.0 - v[i].norm_sqr();
        0.25 * s * s
    })
}

/// `E = int 1/2 |grad psi|^2 + 1/4 (1 - |psi|^2)^2`.
pub fn energy(f: &Field) -> f64 {
    kinetic(f, 0..3) + potential(f)
}

/// Renormalized momentum `P = -int d_1(Im psi) (Re psi - 1)`.
pub fn momentum(f: &Field) -> f64 {
    let d1 = partial(f, 0);
    let v = f.values();
    let dv = d1.values();
    -integrate_with(f.grid(), |i| dv[i].im * (v[i].re - 1.0))
}

/// All scalar functionals at speed `c`.
pub fn lagrangian(f: &Field, c: f64) -> FunctionalReport {
    let k1 = kinetic(f, 0..1);
    let kt = kinetic(f, 1..3);
    let pot = potential(f);
    let p = momentum(f);
    let energy = k1 + kt + pot;
    FunctionalReport {
        energy,
        momentum: p,
        lagrangian: energy - c * p,
        transverse_a: kt,
        longitudinal_b: k1 + pot - c * p,
        c,
    }
}

/// Convenience: `I^c(psi)`.
pub fn lagrangian_value(f: &Field, c: f64) -> f64 {
    lagrangian(f, c).lagrangian
}

/// `i c d_1 psi + Laplacian psi + (1 - |psi|^2) psi` at points off the Dirichlet
/// faces (centered differences, stored boundary samples as neighbours); zero
/// on the faces. Its negative, scaled by `h^d`, is the gradient of the
/// discrete Lagrangian.
pub fn el_residual(f: &Field, c: f64) -> Field {
    let g = f.grid();
    let v = f.values();
    let inv_h2 = 1.0 / (g.spacing() * g.spacing());
    let inv2h = 0.5 / g.spacing();
    let dim = g.dim();
    let mut out = vec![Complex64::new(0.0, 0.0); g.len()];
    g.for_each_interior(|idx, nb| {
        let psi = v[idx];
        let mut lap = Complex64::new(0.0, 0.0);
        for &(up, dn) in &nb[..dim] {
            lap += v[up] + v[dn] - psi * 2.0;
        }
        let d1 = (v[nb[0].0] - v[nb[0].1]) * inv2h;
        out[idx] = Complex64::new(-c * d1.im, c * d1.re) + lap * inv_h2 + psi * (1.0 - psi.norm_sqr());
    });
    Field::new(g.clone(), out).expect("length matches grid")
}

/// Max-norm of the residual over interior points.
pub fn el_residual_norm(f: &Field, c: f64) -> f64 {
    el_residual(f, c).max_abs()
}

/// The second variation of `I^c` at a base field, as a linear operator on
/// perturbations that vanish on the Dirichlet faces:
///
/// ```text
/// H t = -Laplacian t - i c D0_1 t - (1 - |psi|^2) t + 2 <t, psi> psi
/// ```
///
/// `H` is symmetric for the real inner product `sum Re(a conj b)`.
#[derive(Debug, Clone)]
pub struct Hessian {
    grid: Grid,
    base: Vec<Complex64>,
    c: f64,
    shift: f64,
}

impl Hessian {
    pub fn new(base: &Field, c: f64) -> Self {
        Hessian {
            grid: base.grid().clone(),
            base: base.values().to_vec(),
            c,
            shift: 0.0,
        }
    }

    /// `H + shift * Id`.
    pub fn with_shift(mut self, shift: f64) -> Self {
        self.shift = shift;
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Applies the operator to raw samples. Boundary entries of `t` must be
    /// zero; those of `out` are set to zero.
    pub fn apply_raw(&self, t: &[Complex64], out: &mut [Complex64]) {
        let g = &self.grid;
        let inv_h2 = 1.0 / (g.spacing() * g.spacing());
        let inv2h = 0.5 / g.spacing();
        let dim = g.dim();
        let c = self.c;
        let shift = self.shift;
        let base = &self.base;
        out.iter_mut().for_each(|o| *o = Complex64::new(0.0, 0.0));
        g.for_each_interior(|idx, nb| {
            let ti = t[idx];
            let mut lap = Complex64::new(0.0, 0.0);
            for &(up, dn) in &nb[..dim] {
                lap += t[up] + t[dn] - ti * 2.0;
            }
            let d1 = (t[nb[0].0] - t[nb[0].1]) * inv2h;
            let psi = base[idx];
            let proj = ti.re * psi.re + ti.im * psi.im;
            // -i c d1 = c (d1.im - i d1.re)
            out[idx] = -lap * inv_h2 + Complex64::new(c * d1.im, -c * d1.re)
                - ti * (1.0 - psi.norm_sqr())
                + psi * (2.0 * proj)
                + ti * shift;
        });
    }

    /// `H t` for an admissible perturbation.
    pub fn apply(&self, t: &Field) -> Result<Field, FunctionalError> {
        if t.grid() != &self.grid {
            return Err(FunctionalError::GridMismatch);
        }
        if !t.vanishes_on_boundary() {
            return Err(FunctionalError::BoundaryNotZero);
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        self.apply_raw(t.values(), &mut out);
        Ok(Field::new(self.grid.clone(), out).expect("length matches grid"))
    }

    /// `Q(t) = h^d sum <t, H t>`.
    pub fn quadratic(&self, t: &Field) -> Result<f64, FunctionalError> {
        let ht = self.apply(t)?;
        Ok(weighted_inner(t, &ht))
    }
}

/// `h^d sum Re(a conj b)` over all samples.
pub fn weighted_inner(a: &Field, b: &Field) -> f64 {
    let g = a.grid();
    let (x, y) = (a.values(), b.values());
    g.cell_volume() * pairwise_sum_by(g.len(), |i| x[i].re * y[i].re + x[i].im * y[i].im)
}

/// `H t` at `base` (see [`Hessian`]).
pub fn hessian_apply(base: &Field, c: f64, test: &Field) -> Result<Field, FunctionalError> {
    Hessian::new(base, c).apply(test)
}

/// `Q(t) = <H t, t>`, the second variation of `I^c` at `base` along `t`.
pub fn hessian_quadratic(base: &Field, c: f64, test: &Field) -> Result<f64, FunctionalError> {
    Hessian::new(base, c).quadratic(test)
}
