//! Post-hoc structure of computed fields: lifting `psi = rho e^{i theta}`,
//! plaquette windings and vortex balls, integral identities, sublevel sets
//! and far-field decay.

use std::collections::VecDeque;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{gradient, integrate_with, Field, RealField};
use crate::functionals::lagrangian;
use crate::grid::Grid;

pub const DEFAULT_LIFT_THRESHOLD: f64 = 0.1;
pub const DEFAULT_BALL_RADIUS: f64 = 1.0;
/// Corner modulus below which a plaquette is degenerate.
pub const DEGENERATE_MODULUS: f64 = 1e-12;
/// Max distance of a raw winding sum from the nearest integer.
pub const WINDING_ROUNDING: f64 = 0.2;
/// 3-D cells with a corner modulus below this are flagged.
pub const LOW_MODULUS: f64 = 0.1;
pub const DECAY_UNDERFLOW: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("no boundary sample has modulus above the lift threshold {0}")]
    NoSeed(f64),
    #[error("winding needs a 2-D or 3-D grid")]
    Dimension,
}

#[derive(Debug, Clone)]
pub struct Lifting {
    pub rho: RealField,
    /// Unwrapped phase; `NaN` where the mask is false.
    pub theta: RealField,
    pub valid_mask: Vec<bool>,
    pub threshold: f64,
    /// Connected components of the invalid set.
    pub holes: usize,
}

impl Lifting {
    pub fn is_vortexless(&self) -> bool {
        self.valid_mask.iter().all(|&v| v)
    }

    pub fn grid(&self) -> &Grid {
        self.rho.grid()
    }
}

fn neighbours(grid: &Grid, idx: usize) -> impl Iterator<Item = usize> + '_ {
    let ii = grid.unravel(idx);
    (0..grid.dim()).flat_map(move |a| {
        [-1isize, 1].into_iter().filter_map(move |dir| grid.neighbor(ii, a, dir).map(|jj| grid.ravel(jj)))
    })
}

/// Region-growing phase unwrap from the first boundary sample above the
/// threshold, in storage order. Valid samples not connected to that seed
/// are unwrapped from their own first sample.
pub fn lift(f: &Field, threshold: f64) -> Result<Lifting, AnalysisError> {
    let grid = f.grid();
    let v = f.values();
    let n = grid.len();
    let valid: Vec<bool> = v.iter().map(|z| z.norm() > threshold).collect();
    let seed = (0..n).find(|&i| grid.is_boundary(i) && valid[i]).ok_or(AnalysisError::NoSeed(threshold))?;
    let mut theta = vec![f64::NAN; n];
    let mut queue = VecDeque::new();
    let mut start = Some(seed);
    let mut scan = 0;
    while let Some(s) = start {
        theta[s] = v[s].arg();
        queue.push_back(s);
        while let Some(i) = queue.pop_front() {
            for j in neighbours(grid, i) {
                if valid[j] && theta[j].is_nan() {
                    theta[j] = theta[i] + (v[j] / v[i]).arg();
                    queue.push_back(j);
                }
            }
        }
        start = None;
        while scan < n {
            if valid[scan] && theta[scan].is_nan() {
                start = Some(scan);
                break;
            }
            scan += 1;
        }
    }
    // Count components of the invalid set.
    let mut seen = vec![false; n];
    let mut holes = 0;
    for i in 0..n {
        if valid[i] || seen[i] {
            continue;
        }
        holes += 1;
        seen[i] = true;
        queue.push_back(i);
        while let Some(k) = queue.pop_front() {
            for j in neighbours(grid, k) {
                if !valid[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    Ok(Lifting {
        rho: f.modulus(),
        theta: RealField::new(grid.clone(), theta).expect("length matches grid"),
        valid_mask: valid,
        threshold,
        holes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plaquette {
    /// Lower corner of the cell (grid indices).
    pub cell: [usize; 3],
    pub center: [f64; 3],
    pub winding: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: [f64; 3],
    pub radius: f64,
}

impl Ball {
    fn distance(&self, other: &Ball) -> f64 {
        (0..3).map(|a| (self.center[a] - other.center[a]).powi(2)).sum::<f64>().sqrt()
    }

    pub fn intersects(&self, other: &Ball) -> bool {
        self.distance(other) <= self.radius + other.radius
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VortexSet {
    pub plaquettes: Vec<Plaquette>,
    pub balls: Vec<Ball>,
    /// Cells with a near-zero corner or an ambiguous winding.
    pub degenerate_cells: Vec<[usize; 3]>,
    /// 3-D only: cells with a corner of modulus below [`LOW_MODULUS`].
    pub low_modulus_cells: Vec<[usize; 3]>,
    pub total_winding: i64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Winding {
    Integer(i64),
    Degenerate,
}

/// Winding of `psi` around the plaquette with lower corner `cell` in the
/// `(x1, x2)` plane, counter-clockwise. Periodic axes wrap; a cell that
/// would leave a Dirichlet axis returns `None`.
pub fn winding(f: &Field, cell: [usize; 3]) -> Option<Winding> {
    winding_in_plane(f, cell, 0, 1)
}

fn winding_in_plane(f: &Field, cell: [usize; 3], a: usize, b: usize) -> Option<Winding> {
    let grid = f.grid();
    if grid.dim() < 2 {
        return None;
    }
    let p0 = cell;
    let p1 = grid.neighbor(p0, a, 1)?;
    let p2 = grid.neighbor(p1, b, 1)?;
    let p3 = grid.neighbor(p0, b, 1)?;
    let v = f.values();
    let corners = [p0, p1, p2, p3].map(|p| v[grid.ravel(p)]);
    if corners.iter().any(|z| z.norm() < DEGENERATE_MODULUS) {
        return Some(Winding::Degenerate);
    }
    let raw: f64 = (0..4).map(|k| (corners[(k + 1) % 4] / corners[k]).arg()).sum::<f64>() / (2.0 * PI);
    let rounded = raw.round();
    if (raw - rounded).abs() > WINDING_ROUNDING {
        Some(Winding::Degenerate)
    } else {
        Some(Winding::Integer(rounded as i64))
    }
}

/// Merges intersecting balls: the first intersecting pair `(i, j)` becomes
/// the ball centred at `i` with radius `R_i + R_j`, repeated until the
/// balls are pairwise disjoint.
pub fn aggregate_balls(mut balls: Vec<Ball>) -> Vec<Ball> {
    'outer: loop {
        for i in 0..balls.len() {
            for j in i + 1..balls.len() {
                if balls[i].intersects(&balls[j]) {
                    balls[i].radius += balls[j].radius;
                    balls.remove(j);
                    continue 'outer;
                }
            }
        }
        return balls;
    }
}

/// Scans every cell. In 2-D, nonzero plaquette windings are listed and
/// their centres, with radius `radius`, aggregated into disjoint balls. In
/// 3-D only low-modulus cells are flagged.
pub fn vortex_detect(f: &Field, radius: f64) -> VortexSet {
    let grid = f.grid();
    let mut set = VortexSet::default();
    if grid.dim() < 2 {
        return set;
    }
    let counts = grid.counts3();
    let h = grid.spacing();
    let v = f.values();
    for i in 0..counts[0] {
        for j in 0..counts[1] {
            for k in 0..counts[2] {
                let cell = [i, j, k];
                if grid.dim() == 3 {
                    let corner_low = (0..8).any(|m| {
                        let mut p = Some(cell);
                        for a in 0..3 {
                            if m & (1 << a) != 0 {
                                p = p.and_then(|q| grid.neighbor(q, a, 1));
                            }
                        }
                        p.map_or(false, |q| v[grid.ravel(q)].norm() < LOW_MODULUS)
                    });
                    if corner_low {
                        set.low_modulus_cells.push(cell);
                    }
                    continue;
                }
                match winding(f, cell) {
                    None => {}
                    Some(Winding::Degenerate) => set.degenerate_cells.push(cell),
                    Some(Winding::Integer(0)) => {}
                    Some(Winding::Integer(w)) => {
                        let p = grid.position(grid.ravel(cell));
                        let center = [p[0] + 0.5 * h, p[1] + 0.5 * h, 0.0];
                        set.plaquettes.push(Plaquette { cell, center, winding: w });
                        set.total_winding += w;
                    }
                }
            }
        }
    }
    let balls = set.plaquettes.iter().map(|p| Ball { center: p.center, radius }).collect();
    set.balls = aggregate_balls(balls);
    set
}

fn potential_integral(f: &Field) -> f64 {
    let v = f.values();
    integrate_with(f.grid(), |i| {
        let s = 1.0 - v[i].norm_sqr();
        0.25 * s * s
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PohozaevResiduals {
    /// Whole-space identity; only indicative on a slab.
    pub r1: f64,
    /// Transverse-dilation identity, valid on the slab.
    pub r2: f64,
    pub r1_extrapolated: bool,
}

/// `r1 = [(d-2)/2 int|grad psi|^2 - (d-1) c P + d/4 int (1-|psi|^2)^2] / s`
/// and `r2 = [(d-3) A + (d-1) B] / s` with `s = E + |c P| + 1e-10`.
pub fn pohozaev_residuals(f: &Field, c: f64) -> (f64, f64) {
    let rep = lagrangian(f, c);
    let d = f.grid().dim() as f64;
    let pot = potential_integral(f);
    let kin = rep.energy - pot;
    let cp = c * rep.momentum;
    let scale = rep.energy + cp.abs() + 1e-10;
    let r1 = ((d - 2.0) * kin - (d - 1.0) * cp + d * pot) / scale;
    let r2 = ((d - 3.0) * rep.transverse_a + (d - 1.0) * rep.longitudinal_b) / scale;
    (r1, r2)
}

pub fn pohozaev_report(f: &Field, c: f64) -> PohozaevResiduals {
    let (r1, r2) = pohozaev_residuals(f, c);
    PohozaevResiduals { r1, r2, r1_extrapolated: true }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftingIdentities {
    /// `1/2 int (1 - rho^2) d_1 theta`.
    pub p_lift: f64,
    /// `(c P - int rho^2 |grad theta|^2)`, normalized.
    pub id2: f64,
    /// `int 2 rho |grad rho|^2 + rho (1-rho^2)^2 - c int rho (1-rho^2) d_1 theta
    ///  - int rho (1-rho^2) |grad theta|^2`, normalized.
    pub id3: f64,
    /// Integrals restricted to the valid mask.
    pub approximate: bool,
}

/// Identities of vortexless solutions written in the lifting. Phase
/// gradients are `Im(conj psi grad psi) / rho^2`, so no unwrapping error
/// enters; only samples on the valid mask contribute.
pub fn lifting_momentum_identities(l: &Lifting, field: &Field, c: f64) -> LiftingIdentities {
    let grid = field.grid();
    let v = field.values();
    let grads = gradient(field);
    let mask = &l.valid_mask;
    let dim = grid.dim();
    let pieces = |i: usize| {
        let z = v[i];
        let r2 = z.norm_sqr();
        let r = r2.sqrt();
        let mut dtheta = [0.0; 3];
        let mut drho = [0.0; 3];
        for a in 0..dim {
            let w = z.conj() * grads[a].values()[i];
            dtheta[a] = w.im / r2;
            drho[a] = w.re / r;
        }
        (r, r2, dtheta, drho)
    };
    let p_lift = 0.5
        * integrate_with(grid, |i| {
            if !mask[i] {
                return 0.0;
            }
            let (_, r2, dt, _) = pieces(i);
            (1.0 - r2) * dt[0]
        });
    let phase_energy = integrate_with(grid, |i| {
        if !mask[i] {
            return 0.0;
        }
        let (_, r2, dt, _) = pieces(i);
        r2 * dt.iter().map(|x| x * x).sum::<f64>()
    });
    let p = crate::functionals::momentum(field);
    let cp = c * p;
    let id2 = (cp - phase_energy) / (cp.abs() + phase_energy + 1e-10);
    let lhs = integrate_with(grid, |i| {
        if !mask[i] {
            return 0.0;
        }
        let (r, r2, _, dr) = pieces(i);
        2.0 * r * dr.iter().map(|x| x * x).sum::<f64>() + r * (1.0 - r2).powi(2)
    });
    let rhs1 = c * integrate_with(grid, |i| {
        if !mask[i] {
            return 0.0;
        }
        let (r, r2, dt, _) = pieces(i);
        r * (1.0 - r2) * dt[0]
    });
    let rhs2 = integrate_with(grid, |i| {
        if !mask[i] {
            return 0.0;
        }
        let (r, r2, dt, _) = pieces(i);
        r * (1.0 - r2) * dt.iter().map(|x| x * x).sum::<f64>()
    });
    let id3 = (lhs - rhs1 - rhs2) / (lhs.abs() + rhs1.abs() + rhs2.abs() + 1e-10);
    LiftingIdentities {
        p_lift,
        id2,
        id3,
        approximate: !l.is_vortexless(),
    }
}

/// `h^d` times the number of samples with `|psi| < r`.
pub fn sublevel_measure(f: &Field, r: f64) -> f64 {
    let count = f.values().iter().filter(|z| z.norm() < r).count();
    f.grid().cell_volume() * count as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Slope {
    pub exponent: f64,
    /// Half-width of the 95% confidence interval.
    pub confidence: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub exp_v: Slope,
    pub exp_u: Slope,
    /// Some annulus sample fell below `1e-14` and was excluded.
    pub underflow: bool,
}

fn fit(points: &[(f64, f64)]) -> Slope {
    let n = points.len();
    if n < 3 {
        return Slope { exponent: f64::NAN, confidence: f64::NAN, samples: n };
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Slope { exponent: f64::NAN, confidence: f64::NAN, samples: n };
    }
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let ss: f64 = points.iter().map(|p| (p.1 - icpt - slope * p.0).powi(2)).sum();
    let se = (ss / (nf - 2.0) / sxx).sqrt();
    Slope { exponent: slope, confidence: 1.96 * se, samples: n }
}

/// Log-log slopes of `|Im psi|` and `|Re psi - 1|` against `|x|` over the
/// annulus `0.4 N <= |x| <= 0.8 N`.
pub fn decay_fit(f: &Field) -> DecayFit {
    let grid = f.grid();
    let n = grid.half_length_x1();
    let (lo, hi) = (0.4 * n, 0.8 * n);
    let mut pv = Vec::new();
    let mut pu = Vec::new();
    let mut underflow = false;
    for (i, z) in f.values().iter().enumerate() {
        let x = grid.position(i);
        let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        if r < lo || r > hi {
            continue;
        }
        let lr = r.ln();
        let (av, au) = (z.im.abs(), (z.re - 1.0).abs());
        if av < DECAY_UNDERFLOW {
            underflow = true;
        } else {
            pv.push((lr, av.ln()));
        }
        if au < DECAY_UNDERFLOW {
            underflow = true;
        } else {
            pu.push((lr, au.ln()));
        }
    }
    DecayFit { exp_v: fit(&pv), exp_u: fit(&pu), underflow }
}

/// `rho e^{i theta}` on the valid mask, 1 elsewhere.
pub fn reconstruct(l: &Lifting) -> Field {
    let grid = l.grid().clone();
    let (r, t) = (l.rho.values(), l.theta.values());
    let values = (0..grid.len())
        .map(|i| if l.valid_mask[i] { Complex64::from_polar(r[i], t[i]) } else { Complex64::new(1.0, 0.0) })
        .collect();
    Field::new(grid, values).expect("length matches grid")
}
