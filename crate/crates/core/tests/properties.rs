use gpwaves::analysis::{aggregate_balls, lift, vortex_detect, Ball};
use gpwaves::field::Field;
use gpwaves::functionals::{el_residual, energy, lagrangian, lagrangian_value, momentum, weighted_inner, Hessian};
use gpwaves::gpwf;
use gpwaves::grid::{Grid, TransverseBc};
use gpwaves::morse::morse_index;
use num_complex::Complex64;
use proptest::prelude::*;

fn small_grid(bc: TransverseBc) -> Grid {
    Grid::new(2, 4.0, 3.0, 0.5, bc).unwrap()
}

/// Smooth bump vanishing on the Dirichlet faces of `grid`.
fn bump(grid: &Grid, a: f64, b: f64, k: f64) -> Field {
    let (n, m) = (grid.half_length_x1(), grid.half_length_transverse());
    let mut f = Field::from_fn(grid, |x| {
        let w = (1.0 - (x[0] / n).powi(2)) * (1.0 - (x[1] / m).powi(2));
        Complex64::new(a * (k * x[1]).cos(), b * (k * x[0]).sin()) * w
    });
    f.set_boundary(Complex64::new(0.0, 0.0));
    f
}

fn base_field(grid: &Grid, amp: f64, phase: f64) -> Field {
    let (n, m) = (grid.half_length_x1(), grid.half_length_transverse());
    let mut f = Field::from_fn(grid, |x| {
        let w = (1.0 - (x[0] / n).powi(2)) * (1.0 - (x[1] / m).powi(2));
        Complex64::from_polar(1.0 - amp * w, phase * w * x[0])
    });
    f.set_boundary(Complex64::new(1.0, 0.0));
    f
}

fn random_field(grid: &Grid, seed: u64) -> Field {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let values = (0..grid.len()).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let mut f = Field::new(grid.clone(), values).unwrap();
    f.set_boundary(Complex64::new(1.0, 0.0));
    f
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn residual_is_minus_the_gradient(amp in 0.0f64..0.8, phase in -1.0f64..1.0, a in -1.0f64..1.0, b in -1.0f64..1.0, c in 0.0f64..1.4) {
        let grid = small_grid(TransverseBc::DirichletOne);
        let f = base_field(&grid, amp, phase);
        let phi = bump(&grid, a, b, 0.7);
        let eps = 1e-4;
        let fd = (lagrangian_value(&f.axpy(eps, &phi), c) - lagrangian_value(&f.axpy(-eps, &phi), c)) / (2.0 * eps);
        let pairing = weighted_inner(&el_residual(&f, c), &phi);
        prop_assert!((fd + pairing).abs() <= 1e-6 * (1.0 + fd.abs()), "fd {fd} pairing {pairing}");
    }

    #[test]
    fn quadratic_form_is_the_second_difference(amp in 0.0f64..0.8, phase in -1.0f64..1.0, a in -1.0f64..1.0, b in -1.0f64..1.0, c in 0.0f64..1.4) {
        let grid = small_grid(TransverseBc::DirichletOne);
        let f = base_field(&grid, amp, phase);
        let t = bump(&grid, a, b, 1.3);
        let eps = 1e-3;
        let second = (lagrangian_value(&f.axpy(eps, &t), c) + lagrangian_value(&f.axpy(-eps, &t), c) - 2.0 * lagrangian_value(&f, c)) / (eps * eps);
        let q = Hessian::new(&f, c).quadratic(&t).unwrap();
        prop_assert!((q - second).abs() <= 1e-4 * (1.0 + q.abs()), "Q {q} second difference {second}");
    }

    #[test]
    fn hessian_is_symmetric(seed in any::<u64>(), c in 0.0f64..1.4) {
        let grid = small_grid(TransverseBc::Periodic);
        let f = random_field(&grid, seed);
        let s = bump(&grid, 0.3, -0.8, 0.9);
        let mut t = random_field(&grid, seed ^ 0xabc).map(|z| z - 1.0);
        t.set_boundary(Complex64::new(0.0, 0.0));
        let hess = Hessian::new(&f, c);
        let (hs, ht) = (hess.apply(&s).unwrap(), hess.apply(&t).unwrap());
        let (x, y) = (weighted_inner(&hs, &t), weighted_inner(&ht, &s));
        let norms = weighted_inner(&s, &s).sqrt() * weighted_inner(&t, &t).sqrt();
        prop_assert!((x - y).abs() <= 1e-12 * norms.max(1.0), "{x} vs {y}");
    }

    #[test]
    fn hessian_is_bounded_below(seed in any::<u64>(), c in 0.0f64..1.4) {
        let grid = small_grid(TransverseBc::DirichletOne);
        let f = random_field(&grid, seed);
        let mut t = random_field(&grid, seed.wrapping_add(7)).map(|z| z - 1.0);
        t.set_boundary(Complex64::new(0.0, 0.0));
        let q = Hessian::new(&f, c).quadratic(&t).unwrap();
        prop_assert!(q >= -(1.0 + 0.25 * c * c) * weighted_inner(&t, &t) - 1e-12);
    }

    #[test]
    fn conjugation_flips_momentum_exactly(seed in any::<u64>()) {
        let grid = small_grid(TransverseBc::DirichletOne);
        let f = random_field(&grid, seed);
        let g = f.conj();
        prop_assert_eq!(momentum(&g), -momentum(&f));
        prop_assert_eq!(energy(&g), energy(&f));
    }

    #[test]
    fn lagrangian_report_is_consistent(seed in any::<u64>(), c in 0.0f64..1.4) {
        let grid = small_grid(TransverseBc::DirichletOne);
        let r = lagrangian(&random_field(&grid, seed), c);
        prop_assert!(r.energy >= 0.0 && r.transverse_a >= 0.0);
        prop_assert!((r.lagrangian - (r.energy - c * r.momentum)).abs() <= 1e-12 * (r.energy + (c * r.momentum).abs()));
        prop_assert!((r.transverse_a + r.longitudinal_b - r.lagrangian).abs() <= 1e-10 * (1.0 + r.energy));
    }

    #[test]
    fn periodic_shift_invariance(seed in any::<u64>(), shift in 1usize..11) {
        let grid = small_grid(TransverseBc::Periodic);
        let f = random_field(&grid, seed);
        let [n0, n1, _] = grid.counts3();
        let v = f.values();
        let shifted: Vec<Complex64> = (0..grid.len()).map(|idx| {
            let ii = grid.unravel(idx);
            v[grid.ravel([ii[0], (ii[1] + shift) % n1, 0])]
        }).collect();
        assert_eq!(n0 * n1, v.len());
        let g = Field::new(grid.clone(), shifted).unwrap();
        let tol = 1e-12;
        prop_assert!((energy(&g) - energy(&f)).abs() <= tol * energy(&f));
        prop_assert!((momentum(&g) - momentum(&f)).abs() <= tol * (1.0 + momentum(&f).abs()));
    }

    #[test]
    fn gpwf_roundtrip(seed in any::<u64>(), periodic in any::<bool>(), c in proptest::option::of(0.0f64..1.4)) {
        let bc = if periodic { TransverseBc::Periodic } else { TransverseBc::DirichletOne };
        let f = random_field(&small_grid(bc), seed);
        let back = gpwf::decode(&gpwf::encode(&f, c)).unwrap();
        prop_assert_eq!(back.field.values(), f.values());
        prop_assert_eq!(back.field.grid(), f.grid());
    }

    #[test]
    fn aggregated_balls_are_disjoint(centres in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0, 0.1f64..2.0), 0..25)) {
        let balls: Vec<Ball> = centres.iter().map(|&(x, y, r)| Ball { center: [x, y, 0.0], radius: r }).collect();
        let total: f64 = balls.iter().map(|b| b.radius).sum();
        let out = aggregate_balls(balls.clone());
        for i in 0..out.len() {
            for j in i + 1..out.len() {
                prop_assert!(!out[i].intersects(&out[j]));
            }
        }
        // Radii are summed, never lost.
        let merged: f64 = out.iter().map(|b| b.radius).sum();
        prop_assert!((merged - total).abs() <= 1e-9 * total.max(1.0));
    }

    #[test]
    fn lifting_reconstructs_around_vortices(x0 in -1.5f64..1.5, y0 in -1.0f64..1.0, sep in 1.5f64..3.0) {
        let grid = Grid::new(2, 6.0, 6.0, 0.25, TransverseBc::DirichletOne).unwrap();
        // Offsets keep the cores off the nodes.
        let (x0, y0) = (x0 + 0.0625, y0 + 0.0937);
        let f = vortex_pair(&grid, [x0, y0 - 0.5 * sep], [x0, y0 + 0.5 * sep]);
        let l = lift(&f, 0.1).unwrap();
        for i in (0..grid.len()).filter(|&i| l.valid_mask[i]) {
            let z = Complex64::from_polar(l.rho.values()[i], l.theta.values()[i]);
            prop_assert!((z - f.values()[i]).norm() <= 1e-10);
        }
        let v = vortex_detect(&f, 0.5);
        prop_assert_eq!(v.total_winding, 0);
        let mut w: Vec<i64> = v.plaquettes.iter().map(|p| p.winding).collect();
        w.sort();
        prop_assert_eq!(w, vec![-1, 1]);
    }

    #[test]
    fn lifting_is_continuous_without_vortices(depth in 0.0f64..0.85, k in -1.5f64..1.5, w in 0.5f64..2.0) {
        let grid = Grid::new(2, 6.0, 6.0, 0.25, TransverseBc::DirichletOne).unwrap();
        let mut f = Field::from_fn(&grid, |x| {
            let g = (-(x[0] * x[0] + x[1] * x[1]) / (w * w)).exp();
            Complex64::from_polar(1.0 - depth * g, k * x[0] * g)
        });
        f.set_boundary(Complex64::new(1.0, 0.0));
        let l = lift(&f, 0.1).unwrap();
        prop_assert!(l.is_vortexless());
        for i in 0..grid.len() {
            let z = Complex64::from_polar(l.rho.values()[i], l.theta.values()[i]);
            prop_assert!((z - f.values()[i]).norm() <= 1e-10);
            let ii = grid.unravel(i);
            for axis in 0..2 {
                if let Some(jj) = grid.neighbor(ii, axis, 1) {
                    let jump = (l.theta.values()[grid.ravel(jj)] - l.theta.values()[i]).abs();
                    prop_assert!(jump < std::f64::consts::PI);
                }
            }
        }
    }

    #[test]
    fn morse_count_is_monotone_in_cutoff(seed in any::<u64>(), c in 0.1f64..1.4, a in -2.0f64..0.0, b in 0.0f64..2.0) {
        let grid = Grid::new(2, 4.0, 2.0, 1.0, TransverseBc::DirichletOne).unwrap();
        let f = random_field(&grid, seed);
        let lo = morse_index(&f, c, a).unwrap().negative_count;
        let hi = morse_index(&f, c, b).unwrap().negative_count;
        prop_assert!(lo <= hi);
    }
}

/// `+1` vortex at `p` and `-1` vortex at `q`, set to 1 on the boundary.
pub fn vortex_pair(grid: &Grid, p: [f64; 2], q: [f64; 2]) -> Field {
    let core = |dx: f64, dy: f64| Complex64::new(dx, dy) / (dx * dx + dy * dy + 0.5).sqrt();
    let mut f = Field::from_fn(grid, |x| core(x[0] - p[0], x[1] - p[1]) * core(x[0] - q[0], x[1] - q[1]).conj());
    f.set_boundary(Complex64::new(1.0, 0.0));
    f
}
