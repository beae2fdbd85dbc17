//! Morse index of the second variation `Q` on test fields vanishing on the
//! Dirichlet faces, and the index growth of circular solutions.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::Field;
use crate::functionals::{FunctionalError, Hessian};
use crate::grid::Grid;
use crate::linalg::inertia::inertia;
use crate::linalg::krylov::cg;
use crate::linalg::poisson::ShiftedLaplacian;
use crate::linalg::{self, dot, LinearOperator};
use crate::onedim::{conjugate_spacing, eta_linearized, eta_linearized_derivative, CircularParams, OneDimError};

/// Largest real dimension (two per interior sample) handled by dense
/// factorization.
pub const DENSE_LIMIT: usize = 2048;
pub const MAX_REPORTED_EIGS: usize = 10;
/// Eigenvalues sought by the iterative path.
pub const ITERATIVE_EIGS: usize = 6;
pub const ITERATIVE_TOL: f64 = 1e-8;
pub const LANCZOS_MAX_STEPS: usize = 160;
pub const SENSITIVITY: f64 = 1e-8;
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Relative width of the bump that closes each conjugate interval.
pub const BUMP_FRACTION: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MorseError {
    #[error(transparent)]
    Functional(#[from] FunctionalError),
    #[error(transparent)]
    OneDim(#[from] OneDimError),
    #[error("Hessian fails the symmetry check (relative defect {0:.3e})")]
    Asymmetric(f64),
    #[error("{0}")]
    Domain(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumMethod {
    DenseFactorization,
    IterativeExtremal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub negative_count: usize,
    /// Ascending.
    pub smallest_eigs: Vec<f64>,
    pub shift_used: f64,
    pub method: SpectrumMethod,
    pub cutoff: f64,
    /// Real dimension of the test space.
    pub dimension: usize,
    /// Counts at `cutoff - 1e-8` and `cutoff + 1e-8`.
    pub count_below_minus: usize,
    pub count_below_plus: usize,
    /// The iterative path could not certify that every eigenvalue below
    /// the cutoff was found; `negative_count` is then a lower bound.
    pub lower_bound_only: bool,
    pub warning: Option<String>,
}

/// Random-vector check `|<a, H b> - <b, H a>| <= 1e-10 (|<a,Hb>| + |<b,Ha>| + 1)`.
pub fn check_symmetry(hess: &Hessian, seed: u64) -> Result<f64, MorseError> {
    let grid = hess.grid();
    let a = random_test_vector(grid, seed);
    let b = random_test_vector(grid, seed.wrapping_add(1));
    let mut ha = vec![Complex64::new(0.0, 0.0); a.len()];
    let mut hb = ha.clone();
    hess.apply_raw(&a, &mut ha);
    hess.apply_raw(&b, &mut hb);
    let (x, y) = (dot(&a, &hb), dot(&b, &ha));
    let defect = (x - y).abs() / (x.abs() + y.abs() + 1.0);
    if defect > SYMMETRY_TOL {
        Err(MorseError::Asymmetric(defect))
    } else {
        Ok(defect)
    }
}

fn random_test_vector(grid: &Grid, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..grid.len())
        .map(|i| {
            let z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            if grid.is_boundary(i) {
                Complex64::new(0.0, 0.0)
            } else {
                z
            }
        })
        .collect()
}

/// The real symmetric matrix of `H` on interior samples, unknowns ordered
/// `(re, im)` per interior sample in storage order.
pub fn dense_hessian(hess: &Hessian) -> DMatrix<f64> {
    let grid = hess.grid();
    let interior = grid.interior_indices();
    let n = 2 * interior.len();
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![Complex64::new(0.0, 0.0); grid.len()];
    let mut out = e.clone();
    for (p, &ip) in interior.iter().enumerate() {
        for part in 0..2 {
            e[ip] = if part == 0 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 1.0) };
            hess.apply_raw(&e, &mut out);
            for (q, &iq) in interior.iter().enumerate() {
                m[(2 * q, 2 * p + part)] = out[iq].re;
                m[(2 * q + 1, 2 * p + part)] = out[iq].im;
            }
            e[ip] = Complex64::new(0.0, 0.0);
        }
    }
    // Exact symmetrization removes rounding-level asymmetry only.
    let t = m.transpose();
    (m + t) * 0.5
}

fn count_below(m: &DMatrix<f64>, cutoff: f64) -> usize {
    let n = m.nrows();
    let mut rows = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            rows.push(m[(i, j)] - if i == j { cutoff } else { 0.0 });
        }
    }
    // Exact zero pivots count as non-negative.
    inertia(n, &rows, 0.0).negative
}

/// Number of eigenvalues of the Hessian at `f` below `cutoff`.
pub fn morse_index(f: &Field, c: f64, cutoff: f64) -> Result<SpectrumReport, MorseError> {
    let hess = Hessian::new(f, c);
    check_symmetry(&hess, 0x5eed)?;
    let dimension = 2 * f.grid().interior_len();
    if dimension <= DENSE_LIMIT {
        dense_report(&hess, cutoff)
    } else {
        iterative_report(&hess, c, cutoff)
    }
}

fn dense_report(hess: &Hessian, cutoff: f64) -> Result<SpectrumReport, MorseError> {
    let m = dense_hessian(hess);
    let dimension = m.nrows();
    let negative_count = count_below(&m, cutoff);
    let count_below_minus = count_below(&m, cutoff - SENSITIVITY);
    let count_below_plus = count_below(&m, cutoff + SENSITIVITY);
    let mut eigs: Vec<f64> = m.symmetric_eigenvalues().iter().cloned().collect();
    eigs.sort_by(f64::total_cmp);
    eigs.truncate(MAX_REPORTED_EIGS);
    Ok(SpectrumReport {
        negative_count,
        smallest_eigs: eigs,
        shift_used: 0.0,
        method: SpectrumMethod::DenseFactorization,
        cutoff,
        dimension,
        count_below_minus,
        count_below_plus,
        lower_bound_only: false,
        warning: None,
    })
}

struct ShiftInverse<'a> {
    op: &'a Hessian,
    precond: ShiftedLaplacian,
    max_iter: usize,
    failures: std::cell::Cell<usize>,
}

impl LinearOperator for ShiftInverse<'_> {
    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        let (sol, stats) = cg(self.op, Some(&self.precond), x, 1e-10, self.max_iter);
        if !stats.converged {
            self.failures.set(self.failures.get() + 1);
        }
        y.copy_from_slice(&sol);
    }
}

/// Lowest eigenvalues by Lanczos with full reorthogonalization on
/// `(H + s)^{-1}`, where `s = 1 + c^2/4 + 0.1` makes `H + s` positive
/// definite (`H >= -1 - c^2/4` for any base field).
fn iterative_report(hess: &Hessian, c: f64, cutoff: f64) -> Result<SpectrumReport, MorseError> {
    let grid = hess.grid().clone();
    let dimension = 2 * grid.interior_len();
    let shift = 1.0 + 0.25 * c * c + 0.1;
    let shifted = hess.clone().with_shift(shift);
    let inv = ShiftInverse {
        op: &shifted,
        precond: ShiftedLaplacian::new(&grid, shift),
        max_iter: 2000,
        failures: std::cell::Cell::new(0),
    };
    let want = ITERATIVE_EIGS.min(dimension);
    let max_steps = LANCZOS_MAX_STEPS.min(dimension);
    let mut basis: Vec<Vec<Complex64>> = Vec::new();
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut v = random_test_vector(&grid, 0x1a2c);
    let nv = linalg::norm(&v);
    linalg::scale(1.0 / nv, &mut v);
    let mut w = vec![Complex64::new(0.0, 0.0); grid.len()];
    let mut ritz: Vec<(f64, f64)> = Vec::new();
    let mut converged = false;
    for j in 0..max_steps {
        inv.apply(&v, &mut w);
        let a = dot(&v, &w);
        basis.push(v.clone());
        alpha.push(a);
        for _ in 0..2 {
            for q in &basis {
                let proj = dot(q, &w);
                linalg::axpy(-proj, q, &mut w);
            }
        }
        let b = linalg::norm(&w);
        let steps = j + 1;
        let exhausted = b <= 1e-14 * a.abs().max(1.0);
        if steps >= want && (steps % 5 == 0 || exhausted || steps == max_steps) {
            ritz = ritz_pairs(&alpha, &beta, b);
            let top = &ritz[..want.min(ritz.len())];
            if exhausted || top.iter().all(|&(theta, res)| res <= ITERATIVE_TOL * theta.abs()) {
                converged = true;
                break;
            }
        }
        if exhausted {
            break;
        }
        beta.push(b);
        v = w.iter().map(|z| z / b).collect();
    }
    // theta = 1 / (lambda + shift); largest theta first.
    let mut eigs: Vec<f64> = ritz.iter().take(want).map(|&(theta, _)| 1.0 / theta - shift).collect();
    eigs.sort_by(f64::total_cmp);
    let count = |cut: f64| eigs.iter().filter(|&&e| e < cut).count();
    let negative_count = count(cutoff);
    let all_below = eigs.len() == want && eigs.iter().all(|&e| e < cutoff + SENSITIVITY) && want < dimension;
    let mut warning = None;
    if !converged {
        warning = Some(format!("Lanczos did not converge to {ITERATIVE_TOL:.0e} in {max_steps} steps"));
    } else if all_below {
        warning = Some(format!("all {want} computed eigenvalues lie below the cutoff"));
    }
    if inv.failures.get() > 0 {
        let msg = format!("{} inner CG solves missed tolerance", inv.failures.get());
        warning = Some(match warning {
            Some(w) => format!("{w}; {msg}"),
            None => msg,
        });
    }
    Ok(SpectrumReport {
        negative_count,
        smallest_eigs: eigs.clone(),
        shift_used: shift,
        method: SpectrumMethod::IterativeExtremal,
        cutoff,
        dimension,
        count_below_minus: count(cutoff - SENSITIVITY),
        count_below_plus: count(cutoff + SENSITIVITY),
        lower_bound_only: !converged || all_below,
        warning,
    })
}

/// Ritz values of the Lanczos matrix with residual bounds, largest first.
fn ritz_pairs(alpha: &[f64], beta: &[f64], last_beta: f64) -> Vec<(f64, f64)> {
    let m = alpha.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut pairs: Vec<(f64, f64)> = (0..m)
        .map(|i| (eig.eigenvalues[i], (last_beta * eig.eigenvectors[(m - 1, i)]).abs()))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    #[serde(rename = "L")]
    pub length: f64,
    /// `floor(L sqrt(4 omega1^2 - 2 rho0^2) / (2 pi)) - 1`.
    pub predicted: i64,
    pub computed: usize,
    /// `computed >= predicted - 1`.
    pub meets_bound: bool,
}

/// Morse index of the circular solution on 1-D intervals of length `L`
/// (grid half-length `L/2`, spacing `h`), against the conjugate-point
/// prediction.
pub fn circular_index_scan(params: &CircularParams, lengths: &[f64], h: f64) -> Result<Vec<ScanRow>, MorseError> {
    let spacing = conjugate_spacing(params).map_err(|e| MorseError::Domain(e.to_string()))?;
    lengths
        .iter()
        .map(|&l| {
            let grid = Grid::line(0.5 * l, h).map_err(|e| MorseError::Domain(e.to_string()))?;
            let field = params.sample(&grid);
            let report = morse_index(&field, params.c, 0.0)?;
            let predicted = (l / spacing).floor() as i64 - 1;
            Ok(ScanRow {
                length: l,
                predicted,
                computed: report.negative_count,
                meets_bound: report.negative_count as i64 >= predicted - 1,
            })
        })
        .collect()
}

fn smooth_bump(t: f64) -> f64 {
    // C^infinity bump on (-1, 1) with value 1 at 0.
    if t.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - t * t)).exp()
    }
}

/// A test field with `Q < 0` supported in `[s0, s0 + 1.1 spacing]`.
///
/// The Jacobi field `zeta(s) = e^{i omega1 s} eta(s - s0)` of the gauged
/// problem vanishes at both ends of `[s0, s0 + spacing]`, where `Q = 0`;
/// adding `eps` times a bump at the right end, shaped like `zeta'` there,
/// with `eps` minimizing `Q(a + eps w) = Q(a) + 2 eps B + eps^2 Q(w)`
/// gives a strictly negative value. Fields are converted back by
/// `tau = e^{-i c s / 2} sigma`.
pub fn conjugate_interval_direction(params: &CircularParams, grid: &Grid, s0: f64) -> Result<(Field, f64), MorseError> {
    let spacing = conjugate_spacing(params)?;
    let end = s0 + spacing;
    let half = BUMP_FRACTION * spacing;
    let dz_end = {
        let e = eta_linearized_derivative(spacing, params)?;
        let w = params.omega1;
        let phase = Complex64::from_polar(1.0, w * end);
        phase * (e + Complex64::new(0.0, w) * eta_linearized(spacing, params)?)
    };
    let gauge = |s: f64| Complex64::from_polar(1.0, -0.5 * params.c * s);
    let mut a = Field::from_fn(grid, |x| {
        let s = x[0];
        if s <= s0 || s >= end {
            return Complex64::new(0.0, 0.0);
        }
        let eta = eta_linearized(s - s0, params).expect("regime checked");
        gauge(s) * Complex64::from_polar(1.0, params.omega1 * s) * eta
    });
    let mut w = Field::from_fn(grid, |x| gauge(x[0]) * dz_end * smooth_bump((x[0] - end) / half));
    a.set_boundary(Complex64::new(0.0, 0.0));
    w.set_boundary(Complex64::new(0.0, 0.0));
    let field = params.sample(grid);
    let hess = Hessian::new(&field, params.c);
    let qw = hess.quadratic(&w)?;
    let b = crate::functionals::weighted_inner(&a, &hess.apply(&w)?);
    let eps = if qw > 0.0 { -b / qw } else { -b.signum() };
    let t = a.axpy(eps, &w);
    let q = hess.quadratic(&t)?;
    Ok((t, q))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisjointDirections {
    pub directions: Vec<Field>,
    pub quadratic: Vec<f64>,
    /// Largest `|B(t_i, t_j)|` over distinct pairs.
    pub max_coupling: f64,
}

impl DisjointDirections {
    /// Count of certified negative directions: each has `Q < 0` and the
    /// supports do not interact through the stencil.
    pub fn certified(&self) -> usize {
        if self.max_coupling == 0.0 {
            self.quadratic.iter().filter(|&&q| q < 0.0).count()
        } else {
            0
        }
    }
}

/// Packs conjugate-interval directions with pairwise separated supports
/// into a 1-D grid, left to right.
pub fn disjoint_negative_directions(params: &CircularParams, grid: &Grid) -> Result<DisjointDirections, MorseError> {
    let spacing = conjugate_spacing(params)?;
    let h = grid.spacing();
    let n = grid.half_length_x1();
    let width = (1.0 + BUMP_FRACTION) * spacing;
    let gap = 3.0 * h;
    let mut s0 = -n + gap;
    let mut directions = Vec::new();
    let mut quadratic = Vec::new();
    while s0 + width + gap <= n {
        let (t, q) = conjugate_interval_direction(params, grid, s0)?;
        directions.push(t);
        quadratic.push(q);
        s0 += width + gap;
    }
    let field = params.sample(grid);
    let hess = Hessian::new(&field, params.c);
    let mut max_coupling = 0.0f64;
    for i in 0..directions.len() {
        let hi = hess.apply(&directions[i])?;
        for d in directions.iter().skip(i + 1) {
            max_coupling = max_coupling.max(crate::functionals::weighted_inner(d, &hi).abs());
        }
    }
    Ok(DisjointDirections { directions, quadratic, max_coupling })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransverseCheck {
    pub q1: f64,
    pub tau_norm2: f64,
    /// `int chi^2` (1 up to rounding) and `int |chi'|^2`.
    pub chi_norm2: f64,
    pub chi_grad2: f64,
    /// `Q(chi tau)` on the multi-dimensional grid.
    pub q: f64,
    /// `Q1 int chi^2 + int |tau|^2 int |chi'|^2`.
    pub product_formula: f64,
}

/// Extends a 1-D direction `tau` (on `line`) to `grid` as `chi(x_perp) tau(x1)`
/// with a Gaussian `chi` widened until `int |grad chi|^2 <= |Q1| / (2 int |tau|^2)`,
/// and evaluates `Q` there at the circular field.
pub fn transverse_extension(params: &CircularParams, tau: &Field, grid: &Grid) -> Result<TransverseCheck, MorseError> {
    let line = tau.grid();
    if line.dim() != 1 || grid.dim() < 2 || grid.counts()[0] != line.counts()[0] || grid.spacing() != line.spacing() {
        return Err(MorseError::Domain("tau must live on the x1 axis of the target grid".into()));
    }
    let q1 = Hessian::new(&params.sample(line), params.c).quadratic(tau)?;
    if !(q1 < 0.0) {
        return Err(MorseError::Domain(format!("1-D direction has Q1 = {q1:.3e} >= 0")));
    }
    let h = grid.spacing();
    let tau_norm2 = h * tau.values().iter().map(|z| z.norm_sqr()).sum::<f64>();
    let target = q1.abs() / (2.0 * tau_norm2);
    let m = grid.half_length_transverse();
    let tdim = grid.dim() - 1;
    let counts = grid.counts3();
    let mut width = 0.5;
    loop {
        if 4.0 * width > m {
            return Err(MorseError::Domain(format!("transverse half-width {m} too small for the cutoff")));
        }
        // chi on the transverse grid, normalized discretely.
        let chi_of = |x: &[f64]| x.iter().map(|y| (-(y * y) / (4.0 * width * width)).exp()).product::<f64>();
        let mut tgrid_vals = Vec::new();
        let tcounts = [counts[1], if tdim == 2 { counts[2] } else { 1 }];
        for j in 0..tcounts[0] {
            for k in 0..tcounts[1] {
                let x = [grid.coord(1, j), if tdim == 2 { grid.coord(2, k) } else { 0.0 }];
                let boundary = !grid.is_periodic(1) && (j == 0 || j + 1 == tcounts[0] || (tdim == 2 && (k == 0 || k + 1 == tcounts[1])));
                tgrid_vals.push(if boundary { 0.0 } else { chi_of(&x[..tdim]) });
            }
        }
        let hd1 = h.powi(tdim as i32);
        let norm2 = hd1 * tgrid_vals.iter().map(|v| v * v).sum::<f64>();
        let scale = 1.0 / norm2.sqrt();
        let chi: Vec<f64> = tgrid_vals.iter().map(|v| v * scale).collect();
        let at = |j: usize, k: usize| chi[j * tcounts[1] + k];
        let mut grad2 = 0.0;
        for j in 0..tcounts[0] {
            for k in 0..tcounts[1] {
                let jn = if j + 1 < tcounts[0] { Some(j + 1) } else if grid.is_periodic(1) { Some(0) } else { None };
                if let Some(jn) = jn {
                    grad2 += (at(jn, k) - at(j, k)).powi(2);
                }
                if tdim == 2 {
                    let kn = if k + 1 < tcounts[1] { Some(k + 1) } else if grid.is_periodic(2) { Some(0) } else { None };
                    if let Some(kn) = kn {
                        grad2 += (at(j, kn) - at(j, k)).powi(2);
                    }
                }
            }
        }
        let chi_grad2 = hd1 * grad2 / (h * h);
        if chi_grad2 > target {
            width *= 1.25;
            continue;
        }
        let chi_norm2 = hd1 * chi.iter().map(|v| v * v).sum::<f64>();
        let tv = tau.values();
        let strides = grid.strides();
        let mut values = vec![Complex64::new(0.0, 0.0); grid.len()];
        for (idx, z) in values.iter_mut().enumerate() {
            let ii = grid.unravel(idx);
            *z = tv[ii[0]] * at(ii[1], if tdim == 2 { ii[2] } else { 0 });
        }
        let _ = strides;
        let iota = Field::new(grid.clone(), values).expect("length");
        let q = Hessian::new(&params.sample(grid), params.c).quadratic(&iota)?;
        return Ok(TransverseCheck {
            q1,
            tau_norm2,
            chi_norm2,
            chi_grad2,
            q,
            product_formula: q1 * chi_norm2 + tau_norm2 * chi_grad2,
        });
    }
}
