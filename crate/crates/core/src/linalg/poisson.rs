//! Fast solver for `(sigma - Laplacian_h) x = b` on the unknowns of a grid
//! (samples off the Dirichlet faces), with homogeneous Dirichlet data.
//!
//! The discrete Laplacian is diagonalized axis by axis: a type-I sine
//! transform on Dirichlet axes and a DFT on periodic axes, both evaluated with
//! `rustfft`. Used as the Sobolev metric for path descent and as the
//! preconditioner of every Krylov solve.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::Grid;

enum AxisKind {
    /// Sine transform through an FFT of length `2 (n + 1)`.
    Sine(Arc<dyn Fft<f64>>),
    Periodic {
        forward: Arc<dyn Fft<f64>>,
        inverse: Arc<dyn Fft<f64>>,
    },
}

struct Axis {
    offset: usize,
    n: usize,
    eig: Vec<f64>,
    kind: AxisKind,
}

pub struct ShiftedLaplacian {
    grid: Grid,
    sigma: f64,
    axes: Vec<Axis>,
}

impl std::fmt::Debug for ShiftedLaplacian {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ShiftedLaplacian")
            .field("sigma", &self.sigma)
            .field("counts", &self.grid.counts())
            .finish()
    }
}

impl ShiftedLaplacian {
    /// `sigma` must be positive unless every axis is Dirichlet (then
    /// `sigma >= 0` is fine).
    pub fn new(grid: &Grid, sigma: f64) -> Self {
        let mut planner = FftPlanner::new();
        let h2 = grid.spacing() * grid.spacing();
        let axes = (0..grid.dim())
            .map(|a| {
                let count = grid.counts()[a];
                if grid.is_periodic(a) {
                    let n = count;
                    let eig = (0..n)
                        .map(|k| 4.0 / h2 * (PI * k as f64 / n as f64).sin().powi(2))
                        .collect();
                    Axis {
                        offset: 0,
                        n,
                        eig,
                        kind: AxisKind::Periodic {
                            forward: planner.plan_fft_forward(n),
                            inverse: planner.plan_fft_inverse(n),
                        },
                    }
                } else {
                    let n = count.saturating_sub(2);
                    let eig = (1..=n)
                        .map(|k| {
                            4.0 / h2 * (PI * k as f64 / (2.0 * (n as f64 + 1.0))).sin().powi(2)
                        })
                        .collect();
                    Axis {
                        offset: 1,
                        n,
                        eig,
                        kind: AxisKind::Sine(planner.plan_fft_forward(2 * (n + 1))),
                    }
                }
            })
            .collect();
        ShiftedLaplacian {
            grid: grid.clone(),
            sigma,
            axes,
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Solves for `x`; Dirichlet-face entries of `b` are ignored and those of
    /// the result are zero.
    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); b.len()];
        self.solve_into(b, &mut out);
        out
    }

    pub fn solve_into(&self, b: &[Complex64], out: &mut [Complex64]) {
        let dims: Vec<usize> = self.axes.iter().map(|a| a.n).collect();
        let total: usize = dims.iter().product();
        out.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        if total == 0 {
            return;
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); total];
        self.gather(b, &mut buf, &dims);
        for axis in 0..dims.len() {
            self.transform(&mut buf, &dims, axis, false);
        }
        // Divide by the symbol.
        let mut multi = vec![0usize; dims.len()];
        for z in buf.iter_mut() {
            let mut lam = self.sigma;
            for (a, &k) in multi.iter().enumerate() {
                lam += self.axes[a].eig[k];
            }
            *z /= lam;
            for a in (0..dims.len()).rev() {
                multi[a] += 1;
                if multi[a] < dims[a] {
                    break;
                }
                multi[a] = 0;
            }
        }
        for axis in 0..dims.len() {
            self.transform(&mut buf, &dims, axis, true);
        }
        self.scatter(&buf, out, &dims);
    }

    fn for_each_unknown<F: FnMut(usize, usize)>(&self, dims: &[usize], mut f: F) {
        let counts = self.grid.counts3();
        let strides = self.grid.strides();
        let mut multi = vec![0usize; dims.len()];
        let total: usize = dims.iter().product();
        for pos in 0..total {
            let mut idx = 0;
            for (a, &m) in multi.iter().enumerate() {
                idx += (m + self.axes[a].offset) * strides[a];
            }
            debug_assert!(idx < counts.iter().product());
            f(pos, idx);
            for a in (0..dims.len()).rev() {
                multi[a] += 1;
                if multi[a] < dims[a] {
                    break;
                }
                multi[a] = 0;
            }
        }
    }

    fn gather(&self, b: &[Complex64], buf: &mut [Complex64], dims: &[usize]) {
        self.for_each_unknown(dims, |pos, idx| buf[pos] = b[idx]);
    }

    fn scatter(&self, buf: &[Complex64], out: &mut [Complex64], dims: &[usize]) {
        self.for_each_unknown(dims, |pos, idx| out[idx] = buf[pos]);
    }

    fn transform(&self, buf: &mut [Complex64], dims: &[usize], axis: usize, inverse: bool) {
        let n = dims[axis];
        let stride: usize = dims[axis + 1..].iter().product();
        let outer: usize = dims[..axis].iter().product();
        let ax = &self.axes[axis];
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        let mut ext = match &ax.kind {
            AxisKind::Sine(_) => vec![Complex64::new(0.0, 0.0); 2 * (n + 1)],
            AxisKind::Periodic { .. } => Vec::new(),
        };
        for o in 0..outer {
            for s in 0..stride {
                let base = o * n * stride + s;
                for (j, z) in line.iter_mut().enumerate() {
                    *z = buf[base + j * stride];
                }
                match &ax.kind {
                    AxisKind::Sine(fft) => {
                        // Odd extension: FFT gives -2i * sum x_j sin(pi j k / (n+1)).
                        ext.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
                        for j in 0..n {
                            ext[j + 1] = line[j];
                            ext[2 * (n + 1) - (j + 1)] = -line[j];
                        }
                        fft.process(&mut ext);
                        let scale = if inverse { 1.0 / (n as f64 + 1.0) } else { 0.5 };
                        for k in 0..n {
                            line[k] = Complex64::new(0.0, 1.0) * ext[k + 1] * scale;
                        }
                    }
                    AxisKind::Periodic { forward, inverse: inv } => {
                        if inverse {
                            inv.process(&mut line);
                            let scale = 1.0 / n as f64;
                            line.iter_mut().for_each(|z| *z *= scale);
                        } else {
                            forward.process(&mut line);
                        }
                    }
                }
                for (j, z) in line.iter().enumerate() {
                    buf[base + j * stride] = *z;
                }
            }
        }
    }
}

impl super::LinearOperator for ShiftedLaplacian {
    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        self.solve_into(x, y)
    }
}

/// `(sigma - Laplacian_h) x` with zero Dirichlet data; used to check the
/// fast solver.
pub fn apply_shifted_laplacian(grid: &Grid, sigma: f64, x: &[Complex64]) -> Vec<Complex64> {
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    let dim = grid.dim();
    let mut out = vec![Complex64::new(0.0, 0.0); x.len()];
    grid.for_each_interior(|idx, nb| {
        let mut lap = Complex64::new(0.0, 0.0);
        for &(up, dn) in &nb[..dim] {
            lap += x[up] + x[dn] - x[idx] * 2.0;
        }
        out[idx] = x[idx] * sigma - lap * inv_h2;
    });
    out
}
