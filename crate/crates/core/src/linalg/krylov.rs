//! Preconditioned conjugate gradients and MINRES on grid vectors.

use num_complex::Complex64;

use super::{axpy, dot, LinearOperator};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovStats {
    pub iterations: usize,
    pub converged: bool,
    /// Residual estimate relative to the right-hand side, in the
    /// preconditioner norm for MINRES and the Euclidean norm for CG.
    pub relative_residual: f64,
}

fn zeros(n: usize) -> Vec<Complex64> {
    vec![Complex64::new(0.0, 0.0); n]
}

/// Conjugate gradients for a symmetric positive definite `op`, with an
/// optional SPD preconditioner applying `M^{-1}`. Starts from zero.
pub fn cg(
    op: &dyn LinearOperator,
    precond: Option<&dyn LinearOperator>,
    b: &[Complex64],
    rtol: f64,
    max_iter: usize,
) -> (Vec<Complex64>, KrylovStats) {
    let n = b.len();
    let mut x = zeros(n);
    let mut r = b.to_vec();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return (
            x,
            KrylovStats {
                iterations: 0,
                converged: true,
                relative_residual: 0.0,
            },
        );
    }
    let mut z = zeros(n);
    let precondition = |r: &[Complex64], z: &mut [Complex64]| match precond {
        Some(m) => m.apply(r, z),
        None => z.copy_from_slice(r),
    };
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = zeros(n);
    let mut rel = 1.0;
    for it in 1..=max_iter {
        op.apply(&p, &mut q);
        let pq = dot(&p, &q);
        if pq <= 0.0 {
            return (
                x,
                KrylovStats {
                    iterations: it,
                    converged: false,
                    relative_residual: rel,
                },
            );
        }
        let alpha = rz / pq;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &q, &mut r);
        rel = dot(&r, &r).sqrt() / bnorm;
        if rel <= rtol {
            return (
                x,
                KrylovStats {
                    iterations: it,
                    converged: true,
                    relative_residual: rel,
                },
            );
        }
        precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + *pi * beta;
        }
    }
    (
        x,
        KrylovStats {
            iterations: max_iter,
            converged: false,
            relative_residual: rel,
        },
    )
}

/// Preconditioned MINRES for a symmetric (possibly indefinite) `op - shift`,
/// with an SPD preconditioner applying `M^{-1}`. Starts from zero.
pub fn minres(
    op: &dyn LinearOperator,
    precond: Option<&dyn LinearOperator>,
    b: &[Complex64],
    shift: f64,
    rtol: f64,
    max_iter: usize,
) -> (Vec<Complex64>, KrylovStats) {
    let n = b.len();
    let mut x = zeros(n);
    let precondition = |r: &[Complex64], z: &mut [Complex64]| match precond {
        Some(m) => m.apply(r, z),
        None => z.copy_from_slice(r),
    };
    let mut r1 = b.to_vec();
    let mut y = zeros(n);
    precondition(&r1, &mut y);
    let beta1 = dot(&r1, &y);
    if beta1 <= 0.0 {
        return (
            x,
            KrylovStats {
                iterations: 0,
                converged: beta1 == 0.0,
                relative_residual: if beta1 == 0.0 { 0.0 } else { f64::NAN },
            },
        );
    }
    let beta1 = beta1.sqrt();
    let mut r2 = r1.clone();
    let mut v = zeros(n);
    let mut w = zeros(n);
    let mut w1 = zeros(n);
    let mut w2 = zeros(n);
    let (mut oldb, mut beta) = (0.0, beta1);
    let (mut dbar, mut epsln) = (0.0f64, 0.0f64);
    let mut phibar = beta1;
    let (mut cs, mut sn) = (-1.0f64, 0.0f64);
    for it in 1..=max_iter {
        let s = 1.0 / beta;
        for (vi, yi) in v.iter_mut().zip(&y) {
            *vi = yi * s;
        }
        op.apply(&v, &mut y);
        if shift != 0.0 {
            axpy(-shift, &v, &mut y);
        }
        if it >= 2 {
            axpy(-beta / oldb, &r1, &mut y);
        }
        let alfa = dot(&v, &y);
        axpy(-alfa / beta, &r2, &mut y);
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        precondition(&r2, &mut y);
        oldb = beta;
        let bb = dot(&r2, &y);
        if bb < 0.0 {
            // Preconditioner not positive definite.
            return (
                x,
                KrylovStats {
                    iterations: it,
                    converged: false,
                    relative_residual: phibar / beta1,
                },
            );
        }
        beta = bb.sqrt();
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;
        let denom = 1.0 / gamma;
        std::mem::swap(&mut w1, &mut w2);
        std::mem::swap(&mut w2, &mut w);
        for i in 0..n {
            w[i] = (v[i] - w1[i] * oldeps - w2[i] * delta) * denom;
        }
        axpy(phi, &w, &mut x);
        let rel = phibar / beta1;
        if rel <= rtol || beta == 0.0 {
            return (
                x,
                KrylovStats {
                    iterations: it,
                    converged: true,
                    relative_residual: rel,
                },
            );
        }
    }
    (
        x,
        KrylovStats {
            iterations: max_iter,
            converged: false,
            relative_residual: phibar / beta1,
        },
    )
}
