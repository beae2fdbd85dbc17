//! Mountain-pass critical points of `I^c` on the discrete slab.
//!
//! Pipeline: endpoint with negative Lagrangian, a path of fields from the
//! constant 1 to it, deformation of the highest node in the `H^1` metric,
//! then Newton refinement with indefinite Krylov solves.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{self, VortexSet};
use crate::field::Field;
use crate::functionals::{el_residual, lagrangian, lagrangian_value, FunctionalError, FunctionalReport, Hessian, Speed};
use crate::grid::{Grid, GridError, TransverseBc};
use crate::linalg::krylov::minres;
use crate::linalg::poisson::{apply_shifted_laplacian, ShiftedLaplacian};
use crate::linalg::{self, dot};
use crate::morse::{self, MorseError};

/// Energy below which a Newton limit counts as the trivial solution `psi = 1`.
pub const TRIVIAL_ENERGY: f64 = 1e-8;
/// Newton linear-solve tolerance and regularization.
pub const NEWTON_LINEAR_RTOL: f64 = 1e-6;
pub const NEWTON_REGULARIZATION: f64 = 1e-8;
/// Initial Armijo step and re-equidistribution period of the descent.
pub const DESCENT_STEP: f64 = 0.5;
pub const EQUIDISTRIBUTE_EVERY: usize = 20;
/// When Newton diverges or collapses to `psi = 1`, the descent resumes with
/// its tolerance divided by this factor, at most this many times.
pub const DESCENT_RETRY_FACTOR: f64 = 10.0;
pub const DESCENT_RETRIES: usize = 2;

#[derive(Debug, Error)]
pub enum MinimaxError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Functional(#[from] FunctionalError),
    #[error("invalid path: {0}")]
    Path(String),
    #[error("no endpoint with I < -0.1 found (last I = {lagrangian:.6e}, momentum = {momentum:.6e}, momentum sign {sign})")]
    Endpoint { lagrangian: f64, momentum: f64, sign: &'static str },
    #[error("path descent did not reach residual {tol:.1e} in {iterations} iterations (best {residual:.3e})")]
    DescentNotConverged { best: Box<Field>, residual: f64, iterations: usize, tol: f64 },
    #[error("Newton iteration diverged (residual {residual:.3e} after {iterations} iterations)")]
    NewtonDiverged { last_good: Box<Field>, residual: f64, iterations: usize },
    #[error("Newton iteration did not converge in {iterations} iterations (residual {residual:.3e})")]
    NewtonNotConverged { last: Box<Field>, residual: f64, iterations: usize },
    #[error(transparent)]
    Morse(#[from] MorseError),
}

impl MinimaxError {
    /// True for failures of a numerical method, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        !matches!(self, MinimaxError::Config(_) | MinimaxError::Grid(_) | MinimaxError::Functional(FunctionalError::NotSubsonic(_)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    #[serde(rename = "N")]
    pub half_length_x1: f64,
    #[serde(rename = "M")]
    pub half_length_transverse: f64,
    pub h: f64,
    pub bc_transverse: TransverseBc,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid, GridError> {
        Grid::new(self.dim, self.half_length_x1, self.half_length_transverse, self.h, self.bc_transverse)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub c: f64,
    pub grid: GridSpec,
    pub path_nodes: usize,
    pub descent_tol: f64,
    pub newton_tol: f64,
    pub max_descent_iters: usize,
    pub max_newton_iters: usize,
    /// Initial vortex-pair half-separation of the endpoint.
    pub seed_amplitude: f64,
    pub rng_seed: u64,
    /// Amplitude of the seeded perturbation of the initial highest node.
    pub perturbation: f64,
    pub compute_morse: bool,
}

impl SolverConfig {
    pub fn new(c: f64, grid: GridSpec) -> Self {
        SolverConfig {
            c,
            grid,
            path_nodes: 33,
            descent_tol: 1e-3,
            newton_tol: 1e-9,
            max_descent_iters: 20_000,
            max_newton_iters: 30,
            seed_amplitude: 1.0,
            rng_seed: 0,
            perturbation: 1e-4,
            compute_morse: true,
        }
    }

    pub fn speed(&self) -> Result<Speed, MinimaxError> {
        Ok(Speed::subsonic(self.c)?)
    }

    pub fn validate(&self) -> Result<(), MinimaxError> {
        self.speed()?;
        self.grid.build()?;
        if self.path_nodes < 3 {
            return Err(MinimaxError::Config(format!("path_nodes = {} < 3", self.path_nodes)));
        }
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(MinimaxError::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("descent_tol", self.descent_tol)?;
        positive("newton_tol", self.newton_tol)?;
        positive("seed_amplitude", self.seed_amplitude)?;
        if !(self.perturbation.is_finite() && self.perturbation >= 0.0) {
            return Err(MinimaxError::Config(format!("perturbation must be >= 0, got {}", self.perturbation)));
        }
        if self.descent_tol <= self.newton_tol {
            return Err(MinimaxError::Config("descent_tol must exceed newton_tol".into()));
        }
        Ok(())
    }
}

const ENDPOINT_TARGET: f64 = -0.1;
const ENDPOINT_MAX_ROUNDS: usize = 60;
/// `H^1` descent steps on `I^c` tried on each candidate before moving on.
const ENDPOINT_RELAX_STEPS: usize = 40;
/// Core size in the vortex modulus profile `r / sqrt(r^2 + 2)`.
const CORE: f64 = 2.0;

/// Phase with a `2 pi` cut across the plane `x1 = h/2` over `|x_perp| < s`,
/// harmonic elsewhere and zero on the Dirichlet faces: the discrete
/// minimizer of `sum_edges (D theta - J)^2` with `J = 2 pi` on the edges
/// crossing the cut. Decreasing across the slab in the bulk.
fn cut_phase(grid: &Grid, s: f64, solver: &ShiftedLaplacian) -> Vec<f64> {
    let h = grid.spacing();
    let jump = 2.0 * PI / (h * h);
    let mut b = vec![Complex64::new(0.0, 0.0); grid.len()];
    for idx in grid.interior_indices() {
        let x = grid.position(idx);
        let perp = (x[1] * x[1] + x[2] * x[2]).sqrt();
        if perp >= s {
            continue;
        }
        // Left end of a crossing edge sits at x1 = 0, right end at x1 = h.
        if x[0].abs() < 0.25 * h {
            b[idx].re -= jump;
        } else if (x[0] - h).abs() < 0.25 * h {
            b[idx].re += jump;
        }
    }
    solver.solve(&b).into_iter().map(|z| z.re).collect()
}

/// A field equal to 1 on the boundary with `I^c < -0.1` and positive
/// momentum: a vortex pair (a vortex ring in 3-D) of radius `s` in the
/// plane `x1 = h/2`, whose phase is the box-pinned harmonic field with a
/// `2 pi` cut spanning the pair. `s` starts at `seed_amplitude` and grows
/// by 1.5; the last candidate is a cut across the whole slab (a pure phase
/// slip along `x1`), which is also the only candidate for a periodic
/// transverse direction. Each candidate is relaxed by up to 40 descent
/// steps on `I^c` before the next one is tried.
pub fn construct_endpoint(c: f64, grid: &Grid, seed_amplitude: f64) -> Result<Field, MinimaxError> {
    Speed::subsonic(c)?;
    let solver = ShiftedLaplacian::new(grid, 0.0);
    let h = grid.spacing();
    let m = grid.half_length_transverse();
    let dirichlet = grid.dim() > 1 && grid.bc_transverse() == TransverseBc::DirichletOne;
    let build = |s: f64| {
        let theta = cut_phase(grid, s, &solver);
        let mut f = Field::from_fn(grid, |_| Complex64::new(1.0, 0.0));
        for (i, z) in f.values_mut().iter_mut().enumerate() {
            let x = grid.position(i);
            let perp = (x[1] * x[1] + x[2] * x[2]).sqrt();
            let r2 = (x[0] - 0.5 * h).powi(2) + (perp - s).powi(2);
            let rho = if s.is_finite() { (r2 / (r2 + CORE)).sqrt() } else { 1.0 };
            *z = Complex64::from_polar(rho, theta[i]);
        }
        f.set_boundary(Complex64::new(1.0, 0.0));
        f
    };
    let mut radii = Vec::new();
    if dirichlet {
        let mut s = seed_amplitude.max(h);
        for _ in 0..ENDPOINT_MAX_ROUNDS {
            if s >= m - h {
                break;
            }
            radii.push(s);
            s *= 1.5;
        }
    }
    radii.push(f64::INFINITY);
    let mut last = None;
    let relax = ShiftedLaplacian::new(grid, 1.0);
    for s in radii {
        let mut f = build(s);
        let mut rep = lagrangian(&f, c);
        for _ in 0..ENDPOINT_RELAX_STEPS {
            if rep.lagrangian < ENDPOINT_TARGET && rep.momentum > 0.0 {
                return Ok(f);
            }
            if !relax_step(&mut f, c, &relax) {
                break;
            }
            rep = lagrangian(&f, c);
        }
        if rep.lagrangian < ENDPOINT_TARGET && rep.momentum > 0.0 {
            return Ok(f);
        }
        last = Some(rep);
    }
    let rep = last.expect("at least one candidate");
    Err(MinimaxError::Endpoint {
        lagrangian: rep.lagrangian,
        momentum: rep.momentum,
        sign: if rep.momentum > 0.0 { "+" } else if rep.momentum < 0.0 { "-" } else { "0" },
    })
}

/// One Armijo step of `H^1` gradient descent on `I^c`; false if no step
/// decreases it.
fn relax_step(f: &mut Field, c: f64, precond: &ShiftedLaplacian) -> bool {
    let r = el_residual(f, c);
    let d = precond.solve(r.values());
    let slope = f.grid().cell_volume() * dot(r.values(), &d);
    if !(slope > 0.0) {
        return false;
    }
    let current = lagrangian_value(f, c);
    let mut step = DESCENT_STEP;
    for _ in 0..30 {
        let mut trial = f.clone();
        linalg::axpy(step, &d, trial.values_mut());
        if lagrangian_value(&trial, c) <= current - 1e-4 * step * slope {
            *f = trial;
            return true;
        }
        step *= 0.5;
    }
    false
}

/// A polygonal path of fields from the constant 1 to an endpoint with
/// negative Lagrangian.
#[derive(Debug, Clone)]
pub struct Path {
    nodes: Vec<Field>,
}

impl Path {
    pub fn new(nodes: Vec<Field>, c: f64) -> Result<Self, MinimaxError> {
        if nodes.len() < 3 {
            return Err(MinimaxError::Path(format!("{} nodes, need at least 3", nodes.len())));
        }
        let grid = nodes[0].grid().clone();
        if nodes.iter().any(|f| f.grid() != &grid) {
            return Err(MinimaxError::Path("nodes live on different grids".into()));
        }
        if nodes[0].values().iter().any(|&z| z != Complex64::new(1.0, 0.0)) {
            return Err(MinimaxError::Path("first node is not the constant 1".into()));
        }
        if nodes.iter().any(|f| !f.satisfies_boundary_condition()) {
            return Err(MinimaxError::Path("a node violates the boundary condition".into()));
        }
        let end = lagrangian_value(nodes.last().expect("non-empty"), c);
        if !(end < 0.0) {
            return Err(MinimaxError::Path(format!("endpoint Lagrangian {end:.6e} is not negative")));
        }
        Ok(Path { nodes })
    }

    /// `count` equally spaced nodes on the segment from 1 to `endpoint`.
    pub fn straight(endpoint: &Field, count: usize, c: f64) -> Result<Self, MinimaxError> {
        let one = Field::ones(endpoint.grid());
        let nodes = (0..count.max(1))
            .map(|i| one.lerp(endpoint, i as f64 / (count.max(2) - 1) as f64))
            .collect::<Vec<_>>();
        let mut nodes = nodes;
        nodes[0] = one;
        Path::new(nodes, c)
    }

    /// Polygon 1 -> `via` -> `endpoint` with `count` nodes, equidistributed
    /// in the `H^1` metric.
    pub fn through(via: &Field, endpoint: &Field, count: usize, c: f64) -> Result<Self, MinimaxError> {
        let one = Field::ones(endpoint.grid());
        let coarse = vec![one, via.clone(), endpoint.clone()];
        let nodes = equidistribute(&coarse, count.max(3));
        Path::new(nodes, c)
    }

    pub fn nodes(&self) -> &[Field] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn grid(&self) -> &Grid {
        self.nodes[0].grid()
    }

    /// `I^c` at every node.
    pub fn profile(&self, c: f64) -> Vec<f64> {
        self.nodes.iter().map(|f| lagrangian_value(f, c)).collect()
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut k = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[k] {
            k = i;
        }
    }
    k
}

/// Max of `I^c` over the nodes after one refinement pass that inserts the
/// midpoint of every segment whose end values differ by more than 10% of
/// the node maximum. Refinement only adds samples of the same polygon, so
/// the estimate can only grow with refinement towards the polygon's true
/// maximum.
pub fn gamma_estimate(path: &Path, c: f64) -> f64 {
    let values = path.profile(c);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut best = max;
    for i in 0..values.len() - 1 {
        if (values[i] - values[i + 1]).abs() > 0.1 * max.abs() {
            let mid = path.nodes[i].lerp(&path.nodes[i + 1], 0.5);
            best = best.max(lagrangian_value(&mid, c));
        }
    }
    best
}

fn h1_inner(grid: &Grid, a: &[Complex64], b: &[Complex64]) -> f64 {
    grid.cell_volume() * dot(a, &apply_shifted_laplacian(grid, 1.0, b))
}

fn difference(a: &Field, b: &Field) -> Vec<Complex64> {
    a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect()
}

/// Resamples each side of node `k` uniformly in `H^1` arc length, keeping
/// node `k`, both ends and the node count on each side.
fn equidistribute_around(nodes: &[Field], k: usize) -> Vec<Field> {
    let mut out = equidistribute(&nodes[..=k], k + 1);
    out.pop();
    out.extend(equidistribute(&nodes[k..], nodes.len() - k));
    out
}

/// Resamples a polygon to `count` nodes uniformly spaced in `H^1` arc
/// length; first and last nodes are kept.
fn equidistribute(nodes: &[Field], count: usize) -> Vec<Field> {
    let grid = nodes[0].grid();
    let mut arc = vec![0.0];
    for w in nodes.windows(2) {
        let d = difference(&w[1], &w[0]);
        let len = h1_inner(grid, &d, &d).max(0.0).sqrt();
        arc.push(arc.last().unwrap() + len);
    }
    let total = *arc.last().unwrap();
    let mut out = Vec::with_capacity(count);
    out.push(nodes[0].clone());
    let mut seg = 0;
    for j in 1..count - 1 {
        let target = total * j as f64 / (count - 1) as f64;
        while seg + 1 < arc.len() - 1 && arc[seg + 1] < target {
            seg += 1;
        }
        let span = arc[seg + 1] - arc[seg];
        let t = if span > 0.0 { ((target - arc[seg]) / span).clamp(0.0, 1.0) } else { 0.0 };
        out.push(nodes[seg].lerp(&nodes[seg + 1], t));
    }
    out.push(nodes[nodes.len() - 1].clone());
    out
}

#[derive(Debug, Clone)]
pub struct DescentOutcome {
    pub candidate: Field,
    pub path: Path,
    pub iterations: usize,
    pub residual: f64,
    /// Path maximum after each descent step.
    pub max_history: Vec<f64>,
}

fn interior_max(f: &Field) -> f64 {
    f.max_abs()
}

/// Deforms the path by moving its highest node downhill until that node's
/// EL residual max-norm is at most `descent_tol`.
///
/// Each step takes the `H^1` gradient `d = (1 - Laplacian)^{-1} R` at the
/// highest node, removes its component along the local path tangent, and
/// applies Armijo backtracking on `I^c` from step 0.5. Every 20 steps the
/// nodes on either side of the highest one are re-equidistributed in `H^1`
/// arc length and the highest node is re-centred on the polygon's local
/// maximum.
pub fn mountain_pass_descend(path: Path, c: f64, config: &SolverConfig) -> Result<DescentOutcome, MinimaxError> {
    Speed::subsonic(c)?;
    let grid = path.grid().clone();
    let precond = ShiftedLaplacian::new(&grid, 1.0);
    let hd = grid.cell_volume();
    let mut nodes = path.nodes;
    let mut values: Vec<f64> = nodes.iter().map(|f| lagrangian_value(f, c)).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, Field)> = None;
    let mut since_resample = 0;
    for it in 0..=config.max_descent_iters {
        let k = argmax(&values);
        if k == 0 || k + 1 == nodes.len() {
            return Err(MinimaxError::Path("path maximum sits at an end node".into()));
        }
        let r = el_residual(&nodes[k], c);
        let res = interior_max(&r);
        if best.as_ref().map_or(true, |(b, _)| res < *b) {
            best = Some((res, nodes[k].clone()));
        }
        if res <= config.descent_tol {
            let candidate = nodes[k].clone();
            return Ok(DescentOutcome {
                candidate,
                path: Path { nodes },
                iterations: it,
                residual: res,
                max_history: history,
            });
        }
        if it == config.max_descent_iters {
            break;
        }
        if since_resample == EQUIDISTRIBUTE_EVERY {
            since_resample = 0;
            nodes = equidistribute_around(&nodes, k);
            values = nodes.iter().map(|f| lagrangian_value(f, c)).collect();
            recentre_max(&mut nodes, &mut values, c);
            continue;
        }
        since_resample += 1;

        let mut d = precond.solve(r.values());
        let tau = difference(&nodes[k + 1], &nodes[k - 1]);
        let tt = h1_inner(&grid, &tau, &tau);
        if tt > 0.0 {
            // <d, tau>_{H^1} = h^d <R, tau> since d = (1 - Lap)^{-1} R.
            let coef = hd * dot(r.values(), &tau) / tt;
            linalg::axpy(-coef, &tau, &mut d);
        }
        let slope = hd * dot(r.values(), &d);
        let current = values[k];
        let mut delta = DESCENT_STEP;
        let mut moved = false;
        if slope > 0.0 {
            for _ in 0..40 {
                let mut trial = nodes[k].clone();
                linalg::axpy(delta, &d, trial.values_mut());
                let val = lagrangian_value(&trial, c);
                if val <= current - 1e-4 * delta * slope {
                    nodes[k] = trial;
                    values[k] = val;
                    moved = true;
                    break;
                }
                delta *= 0.5;
            }
        }
        if !moved {
            // No downhill progress off the tangent: resample now.
            since_resample = EQUIDISTRIBUTE_EVERY;
        }
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        debug_assert!(history.last().map_or(true, |&p: &f64| max <= p + 1e-12 * p.abs().max(1.0)) || since_resample <= 1);
        history.push(max);
    }
    let (residual, field) = best.expect("at least one iteration");
    Err(MinimaxError::DescentNotConverged {
        best: Box::new(field),
        residual,
        iterations: config.max_descent_iters,
        tol: config.descent_tol,
    })
}

/// Replaces the highest node by the maximizer of `I^c` on the polygon
/// between its neighbours (golden-section search).
fn recentre_max(nodes: &mut [Field], values: &mut [f64], c: f64) {
    let k = argmax(values);
    if k == 0 || k + 1 == nodes.len() {
        return;
    }
    let at = |t: f64, nodes: &[Field]| {
        if t < 0.0 {
            nodes[k].lerp(&nodes[k - 1], -t)
        } else {
            nodes[k].lerp(&nodes[k + 1], t)
        }
    };
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (-1.0f64, 1.0f64);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = lagrangian_value(&at(x1, nodes), c);
    let mut f2 = lagrangian_value(&at(x2, nodes), c);
    for _ in 0..30 {
        if f1 > f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = lagrangian_value(&at(x1, nodes), c);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = lagrangian_value(&at(x2, nodes), c);
        }
    }
    let (t, v) = if f1 > f2 { (x1, f1) } else { (x2, f2) };
    if v > values[k] {
        nodes[k] = at(t, nodes);
        values[k] = v;
    }
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub field: Field,
    pub iterations: usize,
    pub residual: f64,
    pub residual_history: Vec<f64>,
    /// Collapsed to the constant solution (`E <= 1e-8`).
    pub trivial: bool,
}

/// Newton iteration on the discrete EL map, `H delta = R`, with MINRES
/// preconditioned by `(1 - Laplacian)^{-1}` at relative tolerance `1e-6`
/// and a `1e-8` diagonal regularization.
pub fn newton_refine(candidate: &Field, c: f64, config: &SolverConfig) -> Result<NewtonOutcome, MinimaxError> {
    Speed::subsonic(c)?;
    let grid = candidate.grid().clone();
    let precond = ShiftedLaplacian::new(&grid, 1.0);
    let max_krylov = 20 * grid.interior_len().min(5000).max(50);
    let mut psi = candidate.clone();
    let mut r = el_residual(&psi, c);
    let mut res = r.max_abs();
    let mut history = vec![res];
    let mut best = (res, psi.clone());
    let mut increases = 0;
    for it in 0..=config.max_newton_iters {
        if res <= config.newton_tol * (1.0 + psi.max_abs()) {
            let trivial = crate::functionals::energy(&psi) <= TRIVIAL_ENERGY;
            return Ok(NewtonOutcome {
                field: psi,
                iterations: it,
                residual: res,
                residual_history: history,
                trivial,
            });
        }
        if it == config.max_newton_iters {
            break;
        }
        let hess = Hessian::new(&psi, c);
        let (delta, _) = minres(&hess, Some(&precond), r.values(), -NEWTON_REGULARIZATION, NEWTON_LINEAR_RTOL, max_krylov);
        // Damp only when the full step increases the residual.
        let base_norm = linalg::norm(r.values());
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..6 {
            let mut trial = psi.clone();
            linalg::axpy(step, &delta, trial.values_mut());
            let rt = el_residual(&trial, c);
            if linalg::norm(rt.values()) < base_norm {
                accepted = Some((trial, rt));
                break;
            }
            step *= 0.5;
        }
        // Without a decrease, the shortest trial step is taken and counted.
        let (next, rn) = accepted.unwrap_or_else(|| {
            let mut trial = psi.clone();
            linalg::axpy(2.0 * step, &delta, trial.values_mut());
            let rt = el_residual(&trial, c);
            (trial, rt)
        });
        let new_res = rn.max_abs();
        // Divergence is judged on the line-search merit `||R||_2`.
        if linalg::norm(rn.values()) >= base_norm {
            increases += 1;
        } else {
            increases = 0;
        }
        psi = next;
        r = rn;
        res = new_res;
        history.push(res);
        if res < best.0 {
            best = (res, psi.clone());
        }
        if increases >= 3 {
            return Err(MinimaxError::NewtonDiverged {
                last_good: Box::new(best.1),
                residual: res,
                iterations: it + 1,
            });
        }
    }
    Err(MinimaxError::NewtonNotConverged {
        last: Box::new(psi),
        residual: res,
        iterations: config.max_newton_iters,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationCounts {
    pub descent: usize,
    pub newton: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundChecks {
    pub max_modulus: f64,
    pub max_modulus_bound: f64,
    pub max_modulus_ok: bool,
    pub max_depletion: f64,
    pub depletion_bound: f64,
    pub depletion_ok: bool,
    /// Distance of `argmax |1 - |psi||` to the `x1` faces, divided by `N`.
    pub boundary_distance_ratio: f64,
}

/// `max |psi| <= sqrt(1 + c^2/4)` and `max |1 - |psi|| >= (2/5)(1 - c/sqrt 2)`,
/// each with slack `5e-3`.
pub fn bound_checks(f: &Field, c: f64) -> BoundChecks {
    let grid = f.grid();
    let max_modulus = f.max_abs();
    let max_modulus_bound = (1.0 + c * c / 4.0).sqrt();
    let mut depl = 0.0;
    let mut at = 0;
    for (i, z) in f.values().iter().enumerate() {
        let d = (1.0 - z.norm()).abs();
        if d > depl {
            depl = d;
            at = i;
        }
    }
    let depletion_bound = 0.4 * (1.0 - c / crate::SOUND_SPEED);
    let n = grid.half_length_x1();
    let x1 = grid.position(at)[0];
    BoundChecks {
        max_modulus,
        max_modulus_bound,
        max_modulus_ok: max_modulus <= max_modulus_bound + 5e-3,
        max_depletion: depl,
        depletion_bound,
        depletion_ok: depl >= depletion_bound - 5e-3,
        boundary_distance_ratio: (n - x1.abs()) / n,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub field: Option<Field>,
    pub functional: FunctionalReport,
    pub gamma_estimate: f64,
    /// Initial path maximum (the recorded stand-in for the level bound).
    pub initial_path_max: f64,
    pub pohozaev_residuals: (f64, f64),
    /// `I` against `2A/(d-1)`, relative.
    pub dilation_lagrangian_gap: f64,
    pub morse_index: Option<usize>,
    pub vortices: VortexSet,
    pub converged: bool,
    pub trivial: bool,
    pub el_residual: f64,
    pub iterations: IterationCounts,
    pub bounds: BoundChecks,
    pub path_profile: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Adds a seeded perturbation of the given amplitude at interior points.
pub fn perturb(f: &mut Field, amplitude: f64, seed: u64) {
    if amplitude == 0.0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = f.grid().clone();
    for (i, z) in f.values_mut().iter_mut().enumerate() {
        let (a, b): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if !grid.is_boundary(i) {
            *z += Complex64::new(a, b) * amplitude;
        }
    }
}

/// Full pipeline from a given initial path.
pub fn solve_from_path(path: Path, config: &SolverConfig) -> Result<SolveReport, MinimaxError> {
    config.validate()?;
    let c = config.c;
    let initial_profile = path.profile(c);
    let initial_path_max = initial_profile.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut nodes = path.nodes;
    let k = argmax(&initial_profile);
    if k > 0 && k + 1 < nodes.len() {
        perturb(&mut nodes[k], config.perturbation, config.rng_seed);
    }
    let mut path = Path::new(nodes, c)?;
    let mut tightened = config.clone();
    let mut descent_iterations = 0;
    let (descent, newton) = loop {
        let descent = mountain_pass_descend(path, c, &tightened)?;
        descent_iterations += descent.iterations;
        let newton = newton_refine(&descent.candidate, c, config);
        let retry = match &newton {
            Ok(n) => n.trivial,
            Err(e) => matches!(e, MinimaxError::NewtonDiverged { .. } | MinimaxError::NewtonNotConverged { .. }),
        };
        if retry && tightened.descent_tol > config.descent_tol * DESCENT_RETRY_FACTOR.powi(DESCENT_RETRIES as i32) {
            tightened.descent_tol /= DESCENT_RETRY_FACTOR;
            path = descent.path;
            continue;
        }
        break (descent, newton?);
    };
    let gamma = gamma_estimate(&descent.path, c);
    let field = newton.field;
    let functional = lagrangian(&field, c);
    let (r1, r2) = analysis::pohozaev_residuals(&field, c);
    let d = field.grid().dim() as f64;
    let two_a = 2.0 * functional.transverse_a / (d - 1.0);
    let dilation_lagrangian_gap = (functional.lagrangian - two_a).abs() / (functional.lagrangian.abs() + 1e-10);
    let morse_index = if config.compute_morse && !newton.trivial {
        Some(morse::morse_index(&field, c, 0.0)?.negative_count)
    } else {
        None
    };
    let vortices = analysis::vortex_detect(&field, analysis::DEFAULT_BALL_RADIUS);
    let bounds = bound_checks(&field, c);
    let mut warnings = Vec::new();
    if bounds.boundary_distance_ratio < 0.1 {
        warnings.push(format!(
            "depletion concentrates near the x1 boundary (distance/N = {:.3})",
            bounds.boundary_distance_ratio
        ));
    }
    if newton.trivial {
        warnings.push("Newton collapsed to the trivial solution psi = 1".into());
    }
    Ok(SolveReport {
        field: Some(field),
        functional,
        gamma_estimate: gamma,
        initial_path_max,
        pohozaev_residuals: (r1, r2),
        dilation_lagrangian_gap,
        morse_index,
        vortices,
        converged: !newton.trivial,
        trivial: newton.trivial,
        el_residual: newton.residual,
        iterations: IterationCounts { descent: descent_iterations, newton: newton.iterations },
        bounds,
        path_profile: descent.path.profile(c),
        warnings,
    })
}

/// Endpoint and initial path, descent, Newton and diagnostics.
pub fn solve(config: &SolverConfig) -> Result<SolveReport, MinimaxError> {
    config.validate()?;
    let path = initial_path(config)?;
    solve_from_path(path, config)
}

/// Coarsest spacing used for the nested initial path.
pub const COARSEST_SPACING: f64 = 0.25;

fn coarse_config(config: &SolverConfig) -> Option<SolverConfig> {
    let mut coarse = config.clone();
    coarse.grid.h = 2.0 * config.grid.h;
    if coarse.grid.h > COARSEST_SPACING || coarse.grid.build().is_err() {
        return None;
    }
    Some(coarse)
}

/// The straight path to the endpoint on grids with `h > COARSEST_SPACING / 2`.
/// On finer grids, the path descended on the grid of spacing `2h` (itself
/// built the same way) and prolonged by multilinear interpolation; the
/// straight path is the fallback if the coarse descent fails.
pub fn initial_path(config: &SolverConfig) -> Result<Path, MinimaxError> {
    let grid = config.grid.build()?;
    if let Some(coarse) = coarse_config(config) {
        let descended = initial_path(&coarse).and_then(|mut path| {
            let k = argmax(&path.profile(coarse.c));
            if k > 0 && k + 1 < path.len() {
                perturb(&mut path.nodes[k], coarse.perturbation, coarse.rng_seed);
            }
            mountain_pass_descend(path, coarse.c, &coarse)
        });
        if let Ok(d) = descended {
            let nodes: Option<Vec<Field>> = d.path.nodes.iter().map(|f| prolong(f, &grid)).collect();
            if let Some(nodes) = nodes {
                return Path::new(nodes, config.c);
            }
        }
    }
    let endpoint = construct_endpoint(config.c, &grid, config.seed_amplitude)?;
    Path::straight(&endpoint, config.path_nodes, config.c)
}

/// Multilinear interpolation from a grid to the grid with half its spacing
/// and the same extents. `None` if the grids do not nest.
pub fn prolong(coarse: &Field, fine: &Grid) -> Option<Field> {
    let cg = coarse.grid();
    let nests = cg.dim() == fine.dim()
        && cg.bc_transverse() == fine.bc_transverse()
        && (cg.spacing() - 2.0 * fine.spacing()).abs() <= 1e-12 * cg.spacing()
        && (0..3).all(|a| {
            let (nc, nf) = (cg.counts3()[a], fine.counts3()[a]);
            if cg.is_periodic(a) {
                nf == 2 * nc
            } else {
                nf == 2 * nc - 1
            }
        });
    if !nests {
        return None;
    }
    let nc = cg.counts3();
    let v = coarse.values();
    let values = (0..fine.len())
        .map(|idx| {
            let ii = fine.unravel(idx);
            // Per axis: one coarse sample at even indices, two halves at odd.
            let taps: Vec<Vec<(usize, f64)>> = (0..3)
                .map(|a| {
                    let j = ii[a] / 2;
                    if ii[a] % 2 == 0 {
                        vec![(j, 1.0)]
                    } else {
                        vec![(j, 0.5), ((j + 1) % nc[a], 0.5)]
                    }
                })
                .collect();
            let mut z = Complex64::new(0.0, 0.0);
            for &(i, wi) in &taps[0] {
                for &(j, wj) in &taps[1] {
                    for &(k, wk) in &taps[2] {
                        z += v[cg.ravel([i, j, k])] * (wi * wj * wk);
                    }
                }
            }
            z
        })
        .collect();
    Field::new(fine.clone(), values).ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub c: f64,
    #[serde(rename = "N")]
    pub n: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub energy: f64,
    pub momentum: f64,
    pub lagrangian: f64,
    pub morse_index: Option<usize>,
    pub converged: bool,
    /// Maximum of the initial path.
    pub chi: f64,
    pub error: Option<String>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_CSV_HEADER: &str = "c,N,gamma,sigma,energy,momentum,lagrangian,morse_index,converged";

/// Relative noise band for the `sigma = gamma / c` monotonicity flag.
pub const SIGMA_BAND: f64 = 0.02;
/// Relative spread band for the energy-boundedness flag.
pub const ENERGY_BAND: f64 = 0.10;

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{}\n",
                r.c,
                r.n,
                r.gamma,
                r.sigma,
                r.energy,
                r.momentum,
                r.lagrangian,
                r.morse_index.map(|m| m.to_string()).unwrap_or_default(),
                r.converged
            ));
        }
        out
    }

    fn flag(&mut self) {
        let mut ns: Vec<f64> = self.rows.iter().map(|r| r.n).collect();
        ns.sort_by(f64::total_cmp);
        ns.dedup();
        for &n in &ns {
            let idx: Vec<usize> = (0..self.rows.len()).filter(|&i| self.rows[i].n == n && self.rows[i].converged).collect();
            for w in idx.windows(2) {
                let (a, b) = (self.rows[w[0]].sigma, self.rows[w[1]].sigma);
                if b > a * (1.0 + SIGMA_BAND) {
                    let msg = format!("sigma increases by more than {:.0}% from c = {}", SIGMA_BAND * 100.0, self.rows[w[0]].c);
                    self.rows[w[1]].flags.push(msg);
                }
            }
        }
        let mut cs: Vec<f64> = self.rows.iter().map(|r| r.c).collect();
        cs.sort_by(f64::total_cmp);
        cs.dedup();
        for &c in &cs {
            let idx: Vec<usize> = (0..self.rows.len()).filter(|&i| self.rows[i].c == c && self.rows[i].converged).collect();
            if idx.len() < 2 {
                continue;
            }
            let es: Vec<f64> = idx.iter().map(|&i| self.rows[i].energy).collect();
            let lo = es.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = es.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if hi - lo > ENERGY_BAND * lo.abs() {
                for &i in &idx {
                    self.rows[i].flags.push(format!("energy spread over N exceeds {:.0}%", ENERGY_BAND * 100.0));
                }
            }
        }
    }

    pub fn flagged(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| !r.flags.is_empty())
    }
}

fn sweep_chain(c_values: &[f64], n: f64, base: &SolverConfig) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    let mut previous: Option<Field> = None;
    for &c in c_values {
        let mut config = base.clone();
        config.c = c;
        config.grid.half_length_x1 = n;
        let outcome = (|| {
            config.validate()?;
            let path = match &previous {
                Some(prev) => {
                    let grid = config.grid.build()?;
                    let endpoint = construct_endpoint(c, &grid, config.seed_amplitude)?;
                    Path::through(prev, &endpoint, config.path_nodes, c)
                        .or_else(|_| Path::straight(&endpoint, config.path_nodes, c))?
                }
                None => initial_path(&config)?,
            };
            solve_from_path(path, &config)
        })();
        let row = match outcome {
            Ok(rep) => {
                if rep.converged {
                    previous = rep.field.clone();
                }
                SweepRow {
                    c,
                    n,
                    gamma: rep.gamma_estimate,
                    sigma: rep.gamma_estimate / c,
                    energy: rep.functional.energy,
                    momentum: rep.functional.momentum,
                    lagrangian: rep.functional.lagrangian,
                    morse_index: rep.morse_index,
                    converged: rep.converged,
                    chi: rep.initial_path_max,
                    error: None,
                    flags: rep.warnings,
                }
            }
            Err(e) => SweepRow {
                c,
                n,
                gamma: f64::NAN,
                sigma: f64::NAN,
                energy: f64::NAN,
                momentum: f64::NAN,
                lagrangian: f64::NAN,
                morse_index: None,
                converged: false,
                chi: f64::NAN,
                error: Some(e.to_string()),
                flags: Vec::new(),
            },
        };
        rows.push(row);
    }
    rows
}

/// Solves every `(c, N)` cell, warm-starting each `N` chain along
/// increasing `c`. Chains run on up to `threads` threads; the table is
/// ordered by `(N, c)` regardless of scheduling.
pub fn sweep(c_values: &[f64], n_values: &[f64], config: &SolverConfig, threads: usize) -> Result<SweepTable, MinimaxError> {
    if c_values.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(MinimaxError::Config("c values must be strictly increasing".into()));
    }
    for &c in c_values {
        Speed::subsonic(c)?;
    }
    if c_values.is_empty() || n_values.is_empty() {
        return Ok(SweepTable::default());
    }
    let threads = threads.max(1);
    let mut chains: Vec<Option<Vec<SweepRow>>> = vec![None; n_values.len()];
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results = std::sync::Mutex::new(&mut chains);
    std::thread::scope(|scope| {
        for _ in 0..threads.min(n_values.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= n_values.len() {
                    break;
                }
                let rows = sweep_chain(c_values, n_values[i], config);
                results.lock().expect("no panics while holding the lock")[i] = Some(rows);
            });
        }
    });
    let mut order: Vec<usize> = (0..n_values.len()).collect();
    order.sort_by(|&a, &b| n_values[a].total_cmp(&n_values[b]));
    let mut table = SweepTable {
        rows: order.into_iter().flat_map(|i| chains[i].take().expect("every chain ran")).collect(),
    };
    table.flag();
    Ok(table)
}
