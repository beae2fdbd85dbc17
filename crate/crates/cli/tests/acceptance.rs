//! Acceptance suite. Prints one PASS/FAIL line per criterion, with the
//! measured quantities and the elapsed time against the budget, and exits
//! non-zero if any criterion fails. Runs without the libtest harness so the
//! lines are always shown.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use gpwaves::analysis::{aggregate_balls, lift, lifting_momentum_identities, vortex_detect, Ball, DEFAULT_LIFT_THRESHOLD};
use gpwaves::functionals::{el_residual, energy};
use gpwaves::gpwf::read_field;
use gpwaves::minimax::{solve, GridSpec, SolverConfig, SWEEP_CSV_HEADER};
use gpwaves::morse::circular_index_scan;
use gpwaves::onedim::{conjugate_spacing, eta_linearized, invariants_gh_1d, make_circular, sample_soliton, soliton, soliton_energy, SolitonParams};
use gpwaves::{Field, Grid, TransverseBc};
use num_complex::Complex64;
use serde_json::Value;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }
}

fn run(id: &str, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let out = f();
    let elapsed = t.elapsed();
    let in_budget = elapsed <= budget;
    let pass = out.pass && in_budget;
    println!(
        "{} criterion {id} ({name}): {} [{:.1} s / budget {:.0} s{}]",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64(),
        budget.as_secs_f64(),
        if in_budget { "" } else { ", over budget" }
    );
    pass
}

fn gpwaves(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_gpwaves"))
        .args(args)
        .current_dir(dir)
        .env("GPWAVES_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (flm, frm) = (f(0.5 * (a + m)), f(0.5 * (m + b)));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 30)
}

fn residual(f: &Field, c: f64) -> f64 {
    el_residual(f, c).max_abs()
}

fn exact_residuals() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut check = |label: String, coarse: f64, fine: f64| {
        let ratio = coarse / fine;
        let ok = (ratio - 4.0).abs() <= 0.6 && fine <= 1e-3;
        pass &= ok;
        parts.push(format!("{label} ratio {ratio:.3} res {fine:.2e}"));
    };
    for c in [0.2, 0.8, 1.2] {
        let p = SolitonParams::new(c, 0.0).unwrap();
        // Wide enough that the tails are flat to roundoff.
        let half = (20.0 / (2.0 - c * c).sqrt() / 0.02).ceil() * 0.02;
        let r = |h: f64| residual(&sample_soliton(&p, half, h).unwrap(), c);
        check(format!("soliton c={c}"), r(0.02), r(0.01));
    }
    for (c, rho2) in [(0.0, 0.5), (1.0, 0.75)] {
        let p = make_circular(c, f64::sqrt(rho2)).unwrap();
        let r = |h: f64| residual(&p.sample(&Grid::line(20.0, h).unwrap()), c);
        check(format!("circular c={c}"), r(0.02), r(0.01));
    }
    Outcome::new(pass, parts.join("; "))
}

fn soliton_energies() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for c in [0.0, 0.5, 1.0] {
        let p = SolitonParams::new(c, 0.0).unwrap();
        let closed = soliton_energy(c).unwrap();
        let quad = simpson(&|x: f64| 0.5 * (1.0 - soliton(&p, x).norm_sqr()).powi(2), -20.0, 20.0, 1e-12);
        let discrete = energy(&sample_soliton(&p, 20.0, 0.005).unwrap());
        let rel = (discrete - closed).abs() / closed;
        let oracle = (quad - closed).abs() / closed;
        pass &= rel <= 1e-5 && oracle <= 1e-7;
        parts.push(format!("c={c} rel {rel:.2e} (quadrature {oracle:.1e})"));
    }
    Outcome::new(pass, parts.join("; "))
}

fn invariants() -> Outcome {
    let mut worst: f64 = 0.0;
    for c in [0.2, 0.8, 1.2] {
        let f = sample_soliton(&SolitonParams::new(c, 0.0).unwrap(), 20.0, 0.01).unwrap();
        let (g, h) = invariants_gh_1d(&f, c);
        worst = worst.max(g.max_abs()).max(h.max_abs());
    }
    Outcome::new(worst <= 1e-3, format!("max |g|, |h| = {worst:.2e}"))
}

fn appendix_spectrum() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (c, rho2) in [(0.0, 0.5), (1.0, 0.75)] {
        let p = make_circular(c, f64::sqrt(rho2)).unwrap();
        let spacing = conjugate_spacing(&p).unwrap();
        let zero = (1..=3).map(|n| eta_linearized(n as f64 * spacing, &p).unwrap().norm()).fold(0.0, f64::max);
        let rows = circular_index_scan(&p, &[20.0, 40.0, 80.0], 0.1).unwrap();
        let counts: Vec<usize> = rows.iter().map(|r| r.computed).collect();
        let increasing = counts.windows(2).all(|w| w[1] > w[0]);
        let floors: Vec<i64> = rows.iter().map(|r| (r.length / spacing).floor() as i64 - 2).collect();
        let bound = rows.iter().zip(&floors).all(|(r, &f)| r.computed as i64 >= f);
        pass &= zero <= 1e-10 && increasing && bound;
        parts.push(format!("(c={c}, rho0^2={rho2}) |eta| at zeros {zero:.1e}, counts {counts:?} vs floor(L/spacing)-2 {floors:?}"));
    }
    Outcome::new(pass, parts.join("; "))
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn end_to_end(dir: &Path) -> Outcome {
    let o = gpwaves(
        &["solve", "--c", "0.9", "--N", "12", "--M", "12", "--h", "0.1", "--dim", "2", "--bc-transverse", "dirichlet", "--out", "c5"],
        dir,
    );
    if !o.status.success() {
        return Outcome::new(false, format!("solve exited with {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr)));
    }
    let r = read_json(&dir.join("c5/report.json"));
    let num = |v: &Value| v.as_f64().unwrap();
    let el = num(&r["el_residual"]);
    let lagrangian = num(&r["functional"]["lagrangian"]);
    let r2 = num(&r["pohozaev_residuals"][1]);
    let gap = num(&r["dilation_lagrangian_gap"]);
    let b = &r["bounds"];
    let morse = r["morse_index"].as_u64();
    let checks = [
        ("EL residual", el <= 1e-9, format!("{el:.2e}")),
        ("I > 0", lagrangian > 0.0, format!("{lagrangian:.5}")),
        ("|r2| <= 5e-3", r2.abs() <= 5e-3, format!("{r2:.3e}")),
        ("I vs 2A/(d-1) <= 5e-3", gap <= 5e-3, format!("{gap:.3e}")),
        ("max|psi|", b["max_modulus_ok"].as_bool().unwrap(), format!("{:.4} <= {:.4}", num(&b["max_modulus"]), num(&b["max_modulus_bound"]))),
        ("depletion", b["depletion_ok"].as_bool().unwrap(), format!("{:.4} >= {:.4}", num(&b["max_depletion"]), num(&b["depletion_bound"]))),
        ("Morse index <= 1", morse.is_some_and(|m| m <= 1), format!("{morse:?}")),
    ];
    let pass = r["converged"].as_bool() == Some(true) && checks.iter().all(|c| c.1);
    let detail = checks
        .iter()
        .map(|(name, ok, v)| format!("{name} {v} {}", if *ok { "ok" } else { "FAILS" }))
        .collect::<Vec<_>>()
        .join("; ");
    Outcome::new(pass, detail)
}

fn config(c: f64, m: f64) -> SolverConfig {
    let mut cfg = SolverConfig::new(
        c,
        GridSpec { dim: 2, half_length_x1: 12.0, half_length_transverse: m, h: 0.1, bc_transverse: TransverseBc::DirichletOne },
    );
    cfg.compute_morse = false;
    cfg
}

/// The same solve with a wider transverse box, to show which way the
/// identity residuals move.
fn wider_box() {
    let t = Instant::now();
    match solve(&config(0.9, 24.0)) {
        Ok(r) => println!(
            "INFO criterion 5 at M = 24: |r2| = {:.3e}, I vs 2A/(d-1) = {:.3e}, EL residual {:.2e} [{:.1} s]",
            r.pohozaev_residuals.1.abs(),
            r.dilation_lagrangian_gap,
            r.el_residual,
            t.elapsed().as_secs_f64()
        ),
        Err(e) => println!("INFO criterion 5 at M = 24: solve failed: {e}"),
    }
}

fn csv_rows(path: &Path) -> Result<Vec<Vec<f64>>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let mut lines = text.lines();
    if lines.next() != Some(SWEEP_CSV_HEADER) {
        return Err("bad header".into());
    }
    lines
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            if cols.len() != 9 || cols[8] != "true" && cols[8] != "false" {
                return Err(format!("malformed row `{l}`"));
            }
            cols[..7].iter().map(|s| s.parse::<f64>().map_err(|e| format!("`{s}`: {e}"))).collect()
        })
        .collect()
}

fn sweep_sanity(dir: &Path) -> Outcome {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get().min(4)).to_string();
    let sweep = |args: &[&str], out: &str| {
        let mut all = vec!["sweep", "--M", "12", "--h", "0.1", "--out", out];
        all.extend_from_slice(args);
        Command::new(env!("CARGO_BIN_EXE_gpwaves")).args(&all).current_dir(dir).env("GPWAVES_THREADS", &threads).output().unwrap()
    };
    let mut parts = Vec::new();
    let mut pass = true;
    for (args, out) in [(["--c-list", "0.5,0.7,0.9,1.1", "--N-list", "12"], "c6a"), (["--c-list", "0.9", "--N-list", "8,12,16"], "c6b")] {
        let o = sweep(&args, out);
        if !o.status.success() {
            return Outcome::new(false, format!("sweep {out} exited with {:?}", o.status.code()));
        }
        let rows = match csv_rows(&dir.join(out).join("sweep.csv")) {
            Ok(r) => r,
            Err(e) => return Outcome::new(false, e),
        };
        let table = read_json(&dir.join(out).join("sweep.json"));
        let json_rows = table["rows"].as_array().unwrap();
        let round_trip = rows.len() == json_rows.len()
            && rows.iter().zip(json_rows).all(|(r, j)| {
                ["c", "N", "gamma", "sigma", "energy", "momentum", "lagrangian"].iter().zip(r).all(|(k, v)| j[*k].as_f64() == Some(*v))
            });
        let converged = json_rows.iter().all(|j| j["converged"].as_bool() == Some(true));
        pass &= round_trip && converged;
        if out == "c6a" {
            let sigma: Vec<f64> = rows.iter().map(|r| r[3]).collect();
            let ok = sigma.windows(2).all(|w| w[1] <= w[0] * 1.02);
            pass &= ok;
            parts.push(format!("sigma {:?} non-increasing {ok}", sigma.iter().map(|s| format!("{s:.4}")).collect::<Vec<_>>()));
        } else {
            let e: Vec<f64> = rows.iter().map(|r| r[4]).collect();
            let lo = e.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let spread = (hi - lo) / lo;
            pass &= spread <= 0.10;
            parts.push(format!("energy over N {:?} spread {:.1}%", e.iter().map(|s| format!("{s:.4}")).collect::<Vec<_>>(), 100.0 * spread));
        }
        let flags: usize = json_rows.iter().map(|j| j["flags"].as_array().map_or(0, Vec::len)).sum();
        parts.push(format!("{out}: {} rows, all converged {converged}, csv round-trip {round_trip}, {flags} flags", rows.len()));
    }
    Outcome::new(pass, parts.join("; "))
}

fn identity_line(field: &Field, c: f64) -> (bool, bool, String) {
    let l = lift(field, DEFAULT_LIFT_THRESHOLD).unwrap();
    let p = gpwaves::functionals::momentum(field);
    let ids = lifting_momentum_identities(&l, field, c);
    let dp = (ids.p_lift - p).abs() / (p.abs() + 1e-10);
    let ok = dp <= 1e-2 && ids.id2.abs() <= 1e-2 && ids.id3.abs() <= 1e-2;
    let text = format!(
        "holes {}, p_lift {:.6} vs P {:.6} (rel {dp:.2e}), id2 {:.2e}, id3 {:.2e}",
        l.holes, ids.p_lift, p, ids.id2, ids.id3
    );
    (l.is_vortexless(), ok, text)
}

fn lifting_identities(dir: &Path) -> Outcome {
    let stored = match read_field(&dir.join("c5/field.gpwf")) {
        Ok(s) => s,
        Err(e) => return Outcome::new(false, format!("no criterion 5 field: {e}")),
    };
    let (vortexless, ok, text) = identity_line(&stored.field, 0.9);
    if !vortexless {
        let v = vortex_detect(&stored.field, 1.0);
        return Outcome::new(
            false,
            format!("the c = 0.9 solution is not vortexless ({} vortices, total winding {}); masked values: {text}", v.plaquettes.len(), v.total_winding),
        );
    }
    Outcome::new(ok, text)
}

fn vortexless_supplement() {
    let t = Instant::now();
    match solve(&config(1.0, 12.0)) {
        Ok(r) => {
            let f = r.field.unwrap();
            let (vortexless, ok, text) = identity_line(&f, 1.0);
            println!(
                "{} criterion 7, supplementary c = 1.0, N = M = 12, h = 0.1 (vortexless {vortexless}): {text} [{:.1} s]",
                if vortexless && ok { "PASS" } else { "FAIL" },
                t.elapsed().as_secs_f64()
            );
        }
        Err(e) => println!("FAIL criterion 7, supplementary c = 1.0: solve failed: {e}"),
    }
}

fn topology() -> Outcome {
    let grid = Grid::new(2, 6.0, 6.0, 0.25, TransverseBc::DirichletOne).unwrap();
    let (p, q) = ([-1.4375, 0.0937], [1.5625, 0.0937]);
    let core = |dx: f64, dy: f64| Complex64::new(dx, dy) / (dx * dx + dy * dy + 0.5).sqrt();
    let mut f = Field::from_fn(&grid, |x| core(x[0] - p[0], x[1] - p[1]) * core(x[0] - q[0], x[1] - q[1]).conj());
    f.set_boundary(Complex64::new(1.0, 0.0));
    let v = vortex_detect(&f, 0.5);
    let near = |c: [f64; 3], z: [f64; 2]| (c[0] - z[0]).abs() <= 0.25 && (c[1] - z[1]).abs() <= 0.25;
    let plus = v.plaquettes.iter().filter(|pl| pl.winding == 1).all(|pl| near(pl.center, p));
    let minus = v.plaquettes.iter().filter(|pl| pl.winding == -1).all(|pl| near(pl.center, q));
    let windings: Vec<i64> = v.plaquettes.iter().map(|pl| pl.winding).collect();
    let located = windings.len() == 2 && plus && minus;

    // Aggregation on a chain of overlapping balls and on scattered ones.
    let mut disjoint = true;
    for k in 0..50u64 {
        let balls: Vec<Ball> = (0..30)
            .map(|i| {
                let s = (i * 7919 + k * 104729) as f64;
                Ball { center: [(s * 0.618).sin() * 8.0, (s * 0.414).cos() * 8.0, 0.0], radius: 0.2 + (s * 0.3).sin().abs() }
            })
            .collect();
        let out = aggregate_balls(balls);
        disjoint &= out.iter().enumerate().all(|(i, a)| out[i + 1..].iter().all(|b| !a.intersects(b)));
    }
    let chain: Vec<Ball> = (0..40).map(|i| Ball { center: [0.5 * i as f64, 0.0, 0.0], radius: 0.3 }).collect();
    let merged = aggregate_balls(chain);
    disjoint &= merged.iter().enumerate().all(|(i, a)| merged[i + 1..].iter().all(|b| !a.intersects(b)));
    Outcome::new(
        v.total_winding == 0 && located && disjoint,
        format!("total winding {}, windings {windings:?} at the cores {located}, aggregated balls disjoint {disjoint}", v.total_winding),
    )
}

fn determinism(dir: &Path) -> Outcome {
    let o = gpwaves(&["solve", "--manifest", "c5/manifest.json", "--out", "c9"], dir);
    if !o.status.success() {
        return Outcome::new(false, format!("re-run exited with {:?}", o.status.code()));
    }
    let a = std::fs::read(dir.join("c5/report.json")).unwrap();
    let b = std::fs::read(dir.join("c9/report.json")).unwrap();
    let fa = std::fs::read(dir.join("c5/field.gpwf")).unwrap();
    let fb = std::fs::read(dir.join("c9/field.gpwf")).unwrap();
    Outcome::new(a == b, format!("report.json identical {} ({} bytes), field.gpwf identical {}", a == b, a.len(), fa == fb))
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    let s = Duration::from_secs;
    let results = [
        run("1", "exact-solution residuals", s(5), exact_residuals),
        run("2", "soliton energy", s(5), soliton_energies),
        run("3", "1-D invariants", s(2), invariants),
        run("4", "conjugate points and circular index", s(60), appendix_spectrum),
        run("5", "2-D solve c = 0.9, N = M = 12, h = 0.1", s(15 * 60), || end_to_end(dir)),
        run("6", "sweep sanity", s(2 * 3600), || sweep_sanity(dir)),
        run("7", "lifting identities", s(60), || lifting_identities(dir)),
        run("8", "topology", s(5), topology),
        run("9", "determinism", s(15 * 60), || determinism(dir)),
    ];
    wider_box();
    vortexless_supplement();
    let passed = results.iter().filter(|&&p| p).count();
    println!("{passed} of {} criteria pass", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
