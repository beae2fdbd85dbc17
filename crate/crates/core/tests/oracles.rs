//! Exact-solution and closed-form checks against independent oracles.

use std::f64::consts::{PI, SQRT_2};

use gpwaves::field::Field;
use gpwaves::functionals::{el_residual, energy, momentum, Hessian};
use gpwaves::grid::{Grid, TransverseBc};
use gpwaves::minimax::{newton_refine, solve, sweep, GridSpec, SolverConfig, SWEEP_CSV_HEADER};
use gpwaves::morse::{circular_index_scan, conjugate_interval_direction, disjoint_negative_directions, morse_index, transverse_extension};
use gpwaves::onedim::{
    conjugate_spacing, eta_linearized, invariants_gh_1d, make_circular, sample_soliton, soliton, soliton_energy, unwrapped_phase_change,
    SolitonParams,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Adaptive Simpson quadrature, used as an oracle independent of the grid
/// quadrature.
fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 30)
}

fn interior_residual(f: &Field, c: f64) -> f64 {
    el_residual(f, c).max_abs()
}

#[test]
fn soliton_residual_is_second_order() {
    for c in [0.2, 0.8, 1.2] {
        let p = SolitonParams::new(c, 0.0).unwrap();
        let half = 20.0 / (2.0 - c * c).sqrt();
        let half = (half / 0.02).ceil() * 0.02;
        let coarse = interior_residual(&sample_soliton(&p, half, 0.02).unwrap(), c);
        let fine = interior_residual(&sample_soliton(&p, half, 0.01).unwrap(), c);
        let ratio = coarse / fine;
        assert!((ratio - 4.0).abs() <= 0.6, "c = {c}: ratio {ratio}");
        assert!(fine <= 1e-3, "c = {c}: residual {fine}");
    }
    let p = SolitonParams::new(0.8, 0.0).unwrap();
    assert!(interior_residual(&sample_soliton(&p, 20.0, 0.01).unwrap(), 0.8) <= 3e-4);
}

#[test]
fn circular_residual_is_second_order() {
    for (c, rho2) in [(0.0, 0.5), (1.0, 0.75)] {
        let params = make_circular(c, f64::sqrt(rho2)).unwrap();
        let r = |h: f64| interior_residual(&params.sample(&Grid::line(20.0, h).unwrap()), c);
        let (coarse, fine) = (r(0.02), r(0.01));
        assert!((coarse / fine - 4.0).abs() <= 0.6);
        assert!(fine <= 1e-3);
        // Exact discrete symbol: rho0 |(2 cos(w h) - 2)/h^2 + w^2 - c (sin(w h)/h - w)|.
        let (w, h) = (params.omega0, 0.01);
        let symbol = (2.0 * (w * h).cos() - 2.0) / (h * h) + w * w - c * ((w * h).sin() / h - w);
        assert!((fine - params.rho0 * symbol.abs()).abs() <= 1e-10, "roundoff is about 1e-12 / h^2");
    }
}

#[test]
fn soliton_energy_matches_quadrature() {
    for c in [0.0, 0.5, 1.0] {
        let p = SolitonParams::new(c, 0.0).unwrap();
        // Equipartition on dark solitons: |psi'|^2 / 2 = (1 - |psi|^2)^2 / 4.
        let density = |x: f64| 0.5 * (1.0 - soliton(&p, x).norm_sqr()).powi(2);
        let quad = simpson(&density, -20.0, 20.0, 1e-12);
        let closed = soliton_energy(c).unwrap();
        assert!((quad - closed).abs() <= 1e-7 * closed, "c = {c}: quadrature {quad} vs {closed}");
        let discrete = energy(&sample_soliton(&p, 20.0, 0.005).unwrap());
        assert!((discrete - closed).abs() <= 1e-5 * closed, "c = {c}: discrete {discrete} vs {closed}");
    }
    assert!((soliton_energy(0.0).unwrap() - 2.0 * SQRT_2 / 3.0).abs() < 1e-15);
    assert!((soliton_energy(1.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn gaussian_momentum_is_minus_quarter_pi() {
    let grid = Grid::new(2, 10.0, 10.0, 0.05, TransverseBc::DirichletOne).unwrap();
    let f = Field::from_fn(&grid, |x| {
        let g = (-(x[0] * x[0] + x[1] * x[1])).exp();
        Complex64::new(1.0 + g, x[0] * g)
    });
    // -int (1 - 2 x1^2) e^{-2|x|^2}, by nested quadrature.
    let inner = |x1: f64| simpson(&|x2: f64| (1.0 - 2.0 * x1 * x1) * (-2.0 * (x1 * x1 + x2 * x2)).exp(), -10.0, 10.0, 1e-13);
    let oracle = -simpson(&inner, -10.0, 10.0, 1e-12);
    assert!((oracle + PI / 4.0).abs() < 1e-9);
    // The centered difference in the momentum density leaves the error
    // -(h^2/6) int d1^3 v (u - 1) = (pi/8) h^2, about 9.8e-4 at h = 0.05.
    let p = momentum(&f);
    let model = -PI / 4.0 + PI / 8.0 * 0.05 * 0.05;
    assert!((p - model).abs() <= 2e-6, "momentum {p} vs {model}");
    let fine = Grid::new(2, 10.0, 10.0, 0.0125, TransverseBc::DirichletOne).unwrap();
    let f = Field::from_fn(&fine, |x| {
        let g = (-(x[0] * x[0] + x[1] * x[1])).exp();
        Complex64::new(1.0 + g, x[0] * g)
    });
    assert!((momentum(&f) + PI / 4.0).abs() <= 1e-4, "momentum {}", momentum(&f));
}

#[test]
fn soliton_invariants_vanish() {
    for c in [0.2, 0.8, 1.2] {
        let f = sample_soliton(&SolitonParams::new(c, 0.0).unwrap(), 20.0, 0.01).unwrap();
        let (g, h) = invariants_gh_1d(&f, c);
        assert!(g.max_abs() <= 1e-3 && h.max_abs() <= 1e-3, "c = {c}");
    }
}

#[test]
fn soliton_phase_jump_and_floor() {
    for c in [0.3, 0.9, 1.3] {
        let p = SolitonParams::new(c, 0.0).unwrap();
        let half = (40.0 / (2.0 - c * c).sqrt() / 0.01).round() * 0.01;
        let f = sample_soliton(&p, half, 0.01).unwrap();
        let jump = unwrapped_phase_change(f.values());
        assert!((jump - 2.0 * (c / SQRT_2).acos()).abs() <= 1e-6, "c = {c}: jump {jump}");
        let floor = f.values().iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
        assert!((floor - c / SQRT_2).abs() <= 1e-9);
    }
}

#[test]
fn eta_solves_the_linearized_system() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (c, rho2) in [(0.0, 0.5), (1.0, 0.75), (0.4, 0.2)] {
        let p = make_circular(c, f64::sqrt(rho2)).unwrap();
        let (w, r2) = (p.omega1, p.rho0 * p.rho0);
        let step = 1e-4;
        for _ in 0..20 {
            let s: f64 = rng.gen_range(0.0..20.0);
            let e = |t: f64| eta_linearized(t, &p).unwrap();
            let d2 = (e(s + step) - 2.0 * e(s) + e(s - step)) / (step * step);
            let d1 = (e(s + step) - e(s - step)) / (2.0 * step);
            let res = d2 + Complex64::new(0.0, 2.0 * w) * d1 - e(s) * r2 - e(s).conj() * r2;
            assert!(res.norm() <= 1e-6, "residual {} at s = {s}", res.norm());
        }
        let spacing = conjugate_spacing(&p).unwrap();
        for n in 1..=3 {
            assert!(eta_linearized(n as f64 * spacing, &p).unwrap().norm() <= 1e-10);
        }
        // Scan |eta| for the first positive zero, then bisect on the sign of
        // Re eta inside the bracketing cell.
        let norm = |t: f64| eta_linearized(t, &p).unwrap().norm();
        let ds = 1e-3;
        let mut s = ds;
        while !(norm(s) < norm(s - ds) && norm(s) <= norm(s + ds) && norm(s) < 1e-2) {
            s += ds;
            assert!(s < 100.0);
        }
        let re = |t: f64| eta_linearized(t, &p).unwrap().re;
        let (mut a, mut b) = (s - ds, s + ds);
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            if re(a) * re(m) <= 0.0 {
                b = m;
            } else {
                a = m;
            }
        }
        assert!((0.5 * (a + b) - spacing).abs() <= 1e-9, "first zero {} vs spacing {spacing}", 0.5 * (a + b));
    }
}

#[test]
fn newton_recovers_perturbed_soliton() {
    let c = 0.8;
    let exact = sample_soliton(&SolitonParams::new(c, 0.0).unwrap(), 16.0, 0.05).unwrap();
    let mut noisy = exact.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let grid = exact.grid().clone();
    for (i, z) in noisy.values_mut().iter_mut().enumerate() {
        if !grid.is_boundary(i) {
            *z += Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * 1e-3;
        }
    }
    let config = SolverConfig::new(
        c,
        GridSpec { dim: 2, half_length_x1: 16.0, half_length_transverse: 4.0, h: 0.05, bc_transverse: TransverseBc::DirichletOne },
    );
    let out = newton_refine(&noisy, c, &config).unwrap();
    assert!(out.iterations <= 8, "{} iterations", out.iterations);
    assert!(out.residual <= 1e-9);
    assert!(!out.trivial);
    // Quadratic convergence: each late residual is far below the previous one.
    let hist = &out.residual_history;
    assert!(hist.len() >= 3);
    let k = hist.len() - 1;
    assert!(hist[k] <= 1e-2 * hist[k - 1]);
}

/// `Q(chi psi')` at a circular base for a bump cutoff of total width `width`,
/// and the continuum value `omega0^2 rho0^2 int |chi'|^2` it should match.
fn translation_q(c: f64, rho2: f64, width: f64) -> (f64, f64) {
    let p = make_circular(c, rho2.sqrt()).unwrap();
    let grid = Grid::line(45.0, 0.05).unwrap();
    let cut = |x: f64| {
        let t = x / (0.5 * width);
        if t.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - t * t)).exp()
        }
    };
    let mut t = Field::from_fn(&grid, |x| Complex64::new(0.0, p.omega0) * p.value(x[0]) * cut(x[0]));
    t.set_boundary(Complex64::new(0.0, 0.0));
    let q = Hessian::new(&p.sample(&grid), c).quadratic(&t).unwrap();
    let dcut = |x: f64| {
        let t = x / (0.5 * width);
        if t.abs() >= 1.0 {
            return 0.0;
        }
        -2.0 * t / (1.0 - t * t).powi(2) * cut(x) / (0.5 * width)
    };
    let grad2 = simpson(&|x: f64| dcut(x).powi(2), -0.5 * width, 0.5 * width, 1e-12);
    (q, p.omega0 * p.omega0 * rho2 * grad2)
}

#[test]
fn translation_mode_is_nearly_null_for_wide_cutoff() {
    // Small omega0 branch: c = 1, rho0^2 = 3/4.
    let (q40, model40) = translation_q(1.0, 0.75, 40.0);
    let (q80, _) = translation_q(1.0, 0.75, 80.0);
    assert!(q40 > 0.0 && q40 <= 1e-2, "Q = {q40}");
    assert!((q40 - model40).abs() <= 1e-2 * model40, "Q = {q40}, continuum {model40}");
    assert!((q40 / q80 - 2.0).abs() <= 0.05, "ratio {}", q40 / q80);
    // Only the |chi'|^2 term survives, so Q decays like 1/width at any c.
    let (q, model) = translation_q(0.0, 0.5, 40.0);
    assert!((q - model).abs() <= 1e-2 * model);
}

#[test]
fn constant_is_a_local_minimum() {
    let grid = Grid::new(2, 4.0, 3.0, 0.5, TransverseBc::DirichletOne).unwrap();
    let r = morse_index(&Field::ones(&grid), 1.0, 0.0).unwrap();
    assert_eq!(r.negative_count, 0);
    assert!(r.smallest_eigs[0] > 0.0);
}

#[test]
fn circular_index_grows_with_length() {
    let p = make_circular(0.0, f64::sqrt(0.5)).unwrap();
    let rows = circular_index_scan(&p, &[20.0, 40.0, 80.0], 0.1).unwrap();
    let counts: Vec<usize> = rows.iter().map(|r| r.computed).collect();
    assert!(counts.windows(2).all(|w| w[1] > w[0]), "{counts:?}");
    assert!(rows.iter().all(|r| r.meets_bound));
    // Spacing 2 pi: floor(L / 2 pi) - 1 = 2, 5, 11.
    assert_eq!(rows.iter().map(|r| r.predicted).collect::<Vec<_>>(), vec![2, 5, 11]);

    let q = make_circular(1.0, f64::sqrt(0.75)).unwrap();
    let rows = circular_index_scan(&q, &[20.0, 40.0, 80.0], 0.1).unwrap();
    assert!(rows.windows(2).all(|w| w[1].computed > w[0].computed));
    assert!(rows.iter().all(|r| r.meets_bound));
}

#[test]
fn disjoint_directions_certify_the_count() {
    let p = make_circular(0.0, f64::sqrt(0.5)).unwrap();
    let grid = Grid::line(20.0, 0.05).unwrap();
    let d = disjoint_negative_directions(&p, &grid).unwrap();
    let bound = (40.0 / conjugate_spacing(&p).unwrap()).floor() as usize - 1;
    assert!(d.certified() >= bound, "{} < {bound}", d.certified());
    // Each direction lower-bounds the dense count on the same grid.
    let dense = morse_index(&p.sample(&Grid::line(20.0, 0.1).unwrap()), 0.0, 0.0).unwrap();
    assert!(dense.negative_count >= bound);
}

#[test]
fn transverse_extension_keeps_negativity() {
    let p = make_circular(1.0, f64::sqrt(0.75)).unwrap();
    let h = 0.1;
    let line = Grid::line(8.0, h).unwrap();
    let (tau, q1) = conjugate_interval_direction(&p, &line, -7.0).unwrap();
    assert!(q1 < 0.0);
    let grid = Grid::new(2, 8.0, 72.0, h, TransverseBc::DirichletOne).unwrap();
    let check = transverse_extension(&p, &tau, &grid).unwrap();
    assert!(check.q < 0.0);
    assert!((check.chi_norm2 - 1.0).abs() <= 1e-12);
    assert!(check.chi_grad2 <= check.q1.abs() / (2.0 * check.tau_norm2));
    assert!((check.q - check.product_formula).abs() <= 1e-8 * check.product_formula.abs().max(1.0));
}

fn small_config(c: f64) -> SolverConfig {
    SolverConfig::new(
        c,
        GridSpec { dim: 2, half_length_x1: 8.0, half_length_transverse: 6.0, h: 0.5, bc_transverse: TransverseBc::DirichletOne },
    )
}

#[test]
fn small_solve_is_a_deterministic_saddle() {
    let config = small_config(1.0);
    let a = solve(&config).unwrap();
    assert!(a.converged && !a.trivial);
    assert!(a.el_residual <= config.newton_tol);
    assert!(a.functional.lagrangian > 0.0);
    assert!(a.morse_index.unwrap() <= 1);
    // The level sits below the initial path maximum it was descended from.
    assert!(a.gamma_estimate <= a.initial_path_max + 1e-12);
    let b = solve(&config).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.field.unwrap().values(), b.field.unwrap().values());
}

#[test]
fn sweep_csv_round_trips() {
    let mut config = small_config(0.9);
    config.compute_morse = false;
    let table = sweep(&[0.9, 1.1], &[8.0], &config, 1).unwrap();
    assert_eq!(table.rows.len(), 2);
    let csv = table.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(SWEEP_CSV_HEADER));
    for (line, row) in lines.zip(&table.rows) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 9);
        let nums: Vec<f64> = cols[..7].iter().map(|s| s.parse().unwrap()).collect();
        let want = [row.c, row.n, row.gamma, row.sigma, row.energy, row.momentum, row.lagrangian];
        for (got, want) in nums.iter().zip(want) {
            assert_eq!(got.to_bits(), want.to_bits());
        }
        assert_eq!(cols[8].parse::<bool>().unwrap(), row.converged);
    }
}
