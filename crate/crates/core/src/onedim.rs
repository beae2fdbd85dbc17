//! Exact one-dimensional solutions and the linearization around circular
//! solutions. These are the ground-truth fixtures for the rest of the crate.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{partial, Field, RealField};
use crate::grid::{Grid, GridError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OneDimError {
    #[error("dark solitons need 0 <= c < sqrt 2, got c = {0}")]
    SolitonSpeed(f64),
    #[error("no circular solution: c^2 - 4 (rho0^2 - 1) = {0} < 0")]
    NegativeDiscriminant(f64),
    #[error("rho0 must be positive, got {0}")]
    NonPositiveRho(f64),
    #[error("rho0^2 = {rho2} is not below 2 omega1^2 = {limit}: no conjugate points")]
    NotOscillatory { rho2: f64, limit: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Dark soliton with speed `c` centred at `shift`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolitonParams {
    c: f64,
    shift: f64,
}

impl SolitonParams {
    pub fn new(c: f64, shift: f64) -> Result<Self, OneDimError> {
        if !(c.is_finite() && c >= 0.0 && 2.0 - c * c > 0.0) {
            return Err(OneDimError::SolitonSpeed(c));
        }
        Ok(SolitonParams { c, shift })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }
}

/// The dark soliton
///
/// ```text
/// psi_c(x) = -sqrt((2 - c^2)/2) tanh(sqrt(2 - c^2)/2 (x - t)) + i c / sqrt 2
/// ```
///
/// which solves `i c psi' + psi'' + (1 - |psi|^2) psi = 0`. At `c = 0` this is
/// the black soliton, vanishing at its centre.
pub fn soliton(params: &SolitonParams, x: f64) -> Complex64 {
    let c = params.c;
    let k = (2.0 - c * c).sqrt();
    let amp = (0.5 * (2.0 - c * c)).sqrt();
    Complex64::new(
        -amp * (0.5 * k * (x - params.shift)).tanh(),
        c / std::f64::consts::SQRT_2,
    )
}

/// Closed-form energy `(2 - c^2)^{3/2} / 3` of the dark soliton.
pub fn soliton_energy(c: f64) -> Result<f64, OneDimError> {
    SolitonParams::new(c, 0.0)?;
    Ok((2.0 - c * c).powf(1.5) / 3.0)
}

/// Samples the soliton on a 1-D grid `[-N, N]` (boundary samples carry the
/// exact values, not 1).
pub fn sample_soliton(params: &SolitonParams, half_length: f64, h: f64) -> Result<Field, OneDimError> {
    let grid = Grid::line(half_length, h)?;
    Ok(Field::from_fn(&grid, |x| soliton(params, x[0])))
}

/// Which root of `omega0^2 + c omega0 + rho0^2 = 1` to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CircularBranch {
    /// `(-c + sqrt(disc)) / 2`: continuous with `omega0 = 0` at `rho0 = 1`.
    Plus,
    /// `(-c - sqrt(disc)) / 2`.
    Minus,
}

/// Parameters of the circular solution `rho0 exp(i omega0 x1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircularParams {
    pub c: f64,
    pub rho0: f64,
    pub omega0: f64,
    /// `omega0 + c/2`, the frequency after the gauge change
    /// `phi = exp(i c x / 2) psi`.
    pub omega1: f64,
}

pub fn make_circular(c: f64, rho0: f64) -> Result<CircularParams, OneDimError> {
    make_circular_branch(c, rho0, CircularBranch::Plus)
}

pub fn make_circular_branch(
    c: f64,
    rho0: f64,
    branch: CircularBranch,
) -> Result<CircularParams, OneDimError> {
    if !(rho0 > 0.0) {
        return Err(OneDimError::NonPositiveRho(rho0));
    }
    let disc = c * c + 4.0 * (1.0 - rho0 * rho0);
    if disc < 0.0 {
        return Err(OneDimError::NegativeDiscriminant(disc));
    }
    let root = disc.sqrt();
    let omega0 = match branch {
        CircularBranch::Plus => 0.5 * (-c + root),
        CircularBranch::Minus => 0.5 * (-c - root),
    };
    Ok(CircularParams {
        c,
        rho0,
        omega0,
        omega1: omega0 + 0.5 * c,
    })
}

impl CircularParams {
    pub fn value(&self, x: f64) -> Complex64 {
        Complex64::from_polar(self.rho0, self.omega0 * x)
    }

    /// Samples `rho0 exp(i omega0 x1)` on any grid.
    pub fn sample(&self, grid: &Grid) -> Field {
        Field::from_fn(grid, |x| self.value(x[0]))
    }

    /// `4 omega1^2 - 2 rho0^2`; positive exactly in the oscillatory regime.
    pub fn oscillation_discriminant(&self) -> f64 {
        4.0 * self.omega1 * self.omega1 - 2.0 * self.rho0 * self.rho0
    }

    fn frequency(&self) -> Result<f64, OneDimError> {
        let k2 = self.oscillation_discriminant();
        let rho2 = self.rho0 * self.rho0;
        // Relative tolerance so that rho0^2 = (2/3)(1 + c^2/4) is rejected.
        if k2 <= 1e-14 * (1.0 + self.c * self.c) {
            return Err(OneDimError::NotOscillatory {
                rho2,
                limit: 2.0 * self.omega1 * self.omega1,
            });
        }
        Ok(k2.sqrt())
    }
}

/// The explicit solution of the constant-coefficient linearized system
/// `eta'' + 2 i omega1 eta' - rho0^2 eta - rho0^2 conj(eta) = 0` with
/// `eta(0) = 0`.
pub fn eta_linearized(s: f64, params: &CircularParams) -> Result<Complex64, OneDimError> {
    let k = params.frequency()?;
    let denom = 0.5 * k * k;
    Ok(Complex64::new(
        (s * k).sin() / k,
        params.omega1 * ((s * k).cos() - 1.0) / denom,
    ))
}

/// Derivative of [`eta_linearized`].
pub fn eta_linearized_derivative(s: f64, params: &CircularParams) -> Result<Complex64, OneDimError> {
    let k = params.frequency()?;
    let denom = 0.5 * k * k;
    Ok(Complex64::new(
        (s * k).cos(),
        -params.omega1 * k * (s * k).sin() / denom,
    ))
}

/// Distance between consecutive conjugate points, `2 pi / sqrt(4 omega1^2 - 2 rho0^2)`.
pub fn conjugate_spacing(params: &CircularParams) -> Result<f64, OneDimError> {
    Ok(2.0 * std::f64::consts::PI / params.frequency()?)
}

/// The 1-D invariants
///
/// ```text
/// g = u' v - v' u - (c/2)(rho^2 - 1),    h = 1/2 |psi'|^2 - 1/4 (1 - rho^2)^2
/// ```
///
/// sampled pointwise (x1 derivatives by [`partial`]). Both vanish identically
/// on dark solitons.
pub fn invariants_gh_1d(f: &Field, c: f64) -> (RealField, RealField) {
    let d = partial(f, 0);
    let grid = f.grid().clone();
    let (v, dv) = (f.values(), d.values());
    let mut g = Vec::with_capacity(v.len());
    let mut h = Vec::with_capacity(v.len());
    for (z, dz) in v.iter().zip(dv) {
        let rho2 = z.norm_sqr();
        g.push(dz.re * z.im - dz.im * z.re - 0.5 * c * (rho2 - 1.0));
        h.push(0.5 * dz.norm_sqr() - 0.25 * (1.0 - rho2) * (1.0 - rho2));
    }
    (
        RealField::new(grid.clone(), g).expect("length"),
        RealField::new(grid, h).expect("length"),
    )
}

/// Total phase change of samples along x1 (unwrapped with jump threshold pi).
pub fn unwrapped_phase_change(values: &[Complex64]) -> f64 {
    values
        .windows(2)
        .map(|w| (w[1] * w[0].conj()).arg())
        .sum()
}
