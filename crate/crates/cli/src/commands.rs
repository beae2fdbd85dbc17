use std::path::{Path, PathBuf};

use anyhow::Context;
use gpwaves::analysis::{self, lift, lifting_momentum_identities, pohozaev_report, vortex_detect};
use gpwaves::field::Field;
use gpwaves::functionals::{el_residual, lagrangian};
use gpwaves::gpwf::{self, write_atomic};
use gpwaves::minimax::{self, bound_checks};
use gpwaves::morse::{circular_index_scan, morse_index};
use gpwaves::onedim::{invariants_gh_1d, make_circular, sample_soliton, soliton_energy, unwrapped_phase_change, SolitonParams};
use gpwaves::SOUND_SPEED;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{parse_list, parse_range, read_settings, ConfigError, Layered};
use crate::manifest::{hash_file, now, RunManifest, SweepSpec};
use crate::{CircularArgs, Command, FileArgs, MorseArgs, SolitonArgs, SolveArgs, SolverFlags, SweepArgs, ValidateArgs};

pub const THREADS_VAR: &str = "GPWAVES_THREADS";

pub fn run(cmd: Command) -> anyhow::Result<u8> {
    match cmd {
        Command::Solve(a) => solve(a),
        Command::Sweep(a) => sweep(a),
        Command::Analyze(a) => analyze(a),
        Command::Morse(a) => morse(a),
        Command::CircularScan(a) => circular_scan(a),
        Command::Soliton(a) => soliton(a),
        Command::Validate(a) => validate(a),
    }
}

fn threads() -> Result<usize, ConfigError> {
    parse_threads(std::env::var(THREADS_VAR).ok().as_deref())
}

/// Unset means one thread.
pub fn parse_threads(v: Option<&str>) -> Result<usize, ConfigError> {
    match v {
        None => Ok(1),
        Some(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(ConfigError::new(format!("{THREADS_VAR} must be a positive integer, got `{v}`"))),
        },
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Layers the config file and flags (flags win) and reads the manifest, if
/// any. Returns the layers, the manifest and the input files to hash.
fn layers(flags: &SolverFlags) -> anyhow::Result<(Layered, Option<RunManifest>, Vec<PathBuf>)> {
    let mut inputs = Vec::new();
    let mut layers = Layered::default();
    if let Some(path) = &flags.config {
        layers.overlay(&read_settings(path).with_context(|| format!("reading config {}", path.display()))?);
        inputs.push(path.clone());
    }
    let manifest = match &flags.manifest {
        Some(path) => {
            inputs.push(path.clone());
            Some(RunManifest::read(path)?)
        }
        None => None,
    };
    layers.overlay(&flags.settings());
    Ok((layers, manifest, inputs))
}

fn finish_manifest(mut m: RunManifest, inputs: &[PathBuf], outputs: &[PathBuf], dir: &Path) -> anyhow::Result<()> {
    for p in inputs {
        m.inputs.push(hash_file(p).with_context(|| format!("hashing {}", p.display()))?);
    }
    for p in outputs {
        m.outputs.push(hash_file(p).with_context(|| format!("hashing {}", p.display()))?);
    }
    m.finished = now();
    let path = dir.join("manifest.json");
    write_atomic(&path, to_json(&m).as_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn solve(a: SolveArgs) -> anyhow::Result<u8> {
    let (layers, manifest, inputs) = layers(&a.solver)?;
    // A manifest stands in for the defaults; file and flags still override it.
    let config = layers.solver_config(manifest.map(|m| m.config))?;
    config.validate()?;
    let threads = threads()?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let started = now();
    let report = minimax::solve(&config)?;
    let field = report.field.as_ref().expect("solve returns the field");

    let field_path = a.out.join("field.gpwf");
    gpwf::write_field(&field_path, field, Some(config.c)).with_context(|| format!("writing {}", field_path.display()))?;
    let report_path = a.out.join("report.json");
    write_atomic(&report_path, to_json(&report).as_bytes()).with_context(|| format!("writing {}", report_path.display()))?;
    let profile_path = a.out.join("path-profile.csv");
    let mut csv = String::from("node,lagrangian\n");
    for (k, v) in report.path_profile.iter().enumerate() {
        csv.push_str(&format!("{k},{v:.16e}\n"));
    }
    write_atomic(&profile_path, csv.as_bytes()).with_context(|| format!("writing {}", profile_path.display()))?;

    let manifest = RunManifest::new("solve", &config, threads, started);
    finish_manifest(manifest, &inputs, &[field_path, report_path, profile_path], &a.out)?;

    eprintln!(
        "c = {}: I = {:.10}, E = {:.10}, P = {:.10}, EL residual {:.3e}, Morse index {}",
        config.c,
        report.functional.lagrangian,
        report.functional.energy,
        report.functional.momentum,
        report.el_residual,
        report.morse_index.map(|m| m.to_string()).unwrap_or_else(|| "not computed".into())
    );
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok(if report.converged { 0 } else { 3 })
}

fn sweep(a: SweepArgs) -> anyhow::Result<u8> {
    let (mut layers, manifest, inputs) = layers(&a.solver)?;
    let from_manifest = manifest.as_ref().and_then(|m| m.sweep.clone());
    let c_values = if let Some(g) = &a.c_grid {
        parse_range(g)?
    } else if let Some(l) = &a.c_list {
        parse_list("c_list", l)?
    } else if let Some(g) = layers.get("c_grid") {
        parse_range(g)?
    } else if let Some(s) = &from_manifest {
        s.c_values.clone()
    } else {
        return Err(ConfigError::new("sweep needs --c-grid or --c-list").into());
    };
    let n_values = if let Some(l) = &a.n_list {
        parse_list("N_list", l)?
    } else if let Some(l) = layers.get("N_list") {
        parse_list("N_list", l)?
    } else if let Some(s) = &from_manifest {
        s.n_values.clone()
    } else {
        match (layers.get("N"), &manifest) {
            (Some(n), _) => parse_list("N", n)?,
            (None, Some(m)) => vec![m.config.grid.half_length_x1],
            (None, None) => vec![crate::config::DEFAULT_N],
        }
    };
    if c_values.is_empty() || n_values.is_empty() {
        return Err(ConfigError::new("empty sweep").into());
    }
    if layers.get("c").is_none() {
        layers.settings.insert("c".into(), c_values[0].to_string());
    }
    let mut config = layers.solver_config(manifest.map(|m| m.config))?;
    config.c = c_values[0];
    config.validate()?;
    let threads = threads()?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let started = now();
    let table = minimax::sweep(&c_values, &n_values, &config, threads)?;

    let csv_path = a.out.join("sweep.csv");
    write_atomic(&csv_path, table.to_csv().as_bytes()).with_context(|| format!("writing {}", csv_path.display()))?;
    let json_path = a.out.join("sweep.json");
    write_atomic(&json_path, to_json(&table).as_bytes()).with_context(|| format!("writing {}", json_path.display()))?;
    let mut manifest = RunManifest::new("sweep", &config, threads, started);
    manifest.sweep = Some(SweepSpec { c_values, n_values });
    finish_manifest(manifest, &inputs, &[csv_path, json_path], &a.out)?;

    for row in &table.rows {
        if let Some(e) = &row.error {
            eprintln!("c = {}, N = {}: {e}", row.c, row.n);
        }
        for f in &row.flags {
            eprintln!("flag c = {}, N = {}: {f}", row.c, row.n);
        }
    }
    let converged = table.rows.iter().filter(|r| r.converged).count();
    eprintln!("{converged} of {} cells converged", table.rows.len());
    Ok(if converged > 0 { 0 } else { 3 })
}

fn load(path: &Path, c: Option<f64>) -> anyhow::Result<(Field, f64)> {
    let stored = gpwf::read_field(path).with_context(|| format!("reading {}", path.display()))?;
    let c = c.or(stored.c).ok_or_else(|| ConfigError::new(format!("{} stores no speed; pass --c", path.display())))?;
    if !c.is_finite() {
        return Err(ConfigError::new(format!("invalid speed {c}")).into());
    }
    Ok((stored.field, c))
}

/// Everything `analyze` reports, as JSON.
fn analysis_json(f: &Field, c: f64, lift_threshold: f64, ball_radius: f64) -> anyhow::Result<Value> {
    let grid = f.grid();
    let functional = lagrangian(f, c);
    let residual = el_residual(f, c).max_abs();
    let sublevel: Vec<Value> = (1..=9)
        .map(|k| {
            let r = k as f64 / 10.0;
            json!({ "r": r, "measure": analysis::sublevel_measure(f, r) })
        })
        .collect();
    let mut out = json!({
        "grid": {
            "dim": grid.dim(),
            "N": grid.half_length_x1(),
            "M": grid.half_length_transverse(),
            "h": grid.spacing(),
            "bc_transverse": grid.bc_transverse(),
        },
        "c": c,
        "functional": functional,
        "el_residual": residual,
        "sublevel_measures": sublevel,
        "decay_fit": analysis::decay_fit(f),
    });
    let obj = out.as_object_mut().expect("object");
    if grid.dim() == 1 {
        let (g, h) = invariants_gh_1d(f, c);
        obj.insert("invariant_g_max".into(), json!(g.max_abs()));
        obj.insert("invariant_h_max".into(), json!(h.max_abs()));
        obj.insert("phase_change".into(), json!(unwrapped_phase_change(f.values())));
        return Ok(out);
    }
    let d = grid.dim() as f64;
    let gap = (functional.lagrangian - 2.0 * functional.transverse_a / (d - 1.0)).abs() / (functional.lagrangian.abs() + 1e-10);
    let l = lift(f, lift_threshold)?;
    obj.insert("pohozaev".into(), json!(pohozaev_report(f, c)));
    obj.insert("dilation_lagrangian_gap".into(), json!(gap));
    obj.insert("bounds".into(), json!(bound_checks(f, c)));
    obj.insert(
        "lifting".into(),
        json!({
            "threshold": l.threshold,
            "holes": l.holes,
            "vortexless": l.is_vortexless(),
            "identities": lifting_momentum_identities(&l, f, c),
        }),
    );
    obj.insert("vortices".into(), json!(vortex_detect(f, ball_radius)));
    Ok(out)
}

fn analyze(a: FileArgs) -> anyhow::Result<u8> {
    let (f, c) = load(&a.field, a.c)?;
    let out = analysis_json(&f, c, a.lift_threshold, a.ball_radius)?;
    emit(a.out.as_deref(), &to_json(&out))?;
    Ok(0)
}

fn morse(a: MorseArgs) -> anyhow::Result<u8> {
    let (f, c) = load(&a.field, a.c)?;
    let report = morse_index(&f, c, a.cutoff)?;
    emit(a.out.as_deref(), &to_json(&report))?;
    Ok(0)
}

fn circular_scan(a: CircularArgs) -> anyhow::Result<u8> {
    if !(a.rho2 > 0.0) {
        return Err(ConfigError::new(format!("rho2 must be positive, got {}", a.rho2)).into());
    }
    let params = make_circular(a.c, a.rho2.sqrt())?;
    let lengths = parse_list("lengths", &a.lengths)?;
    let rows = circular_index_scan(&params, &lengths, a.h)?;
    let mut csv = String::from("L,predicted,computed,meets_bound\n");
    for r in &rows {
        csv.push_str(&format!("{:.16e},{},{},{}\n", r.length, r.predicted, r.computed, r.meets_bound));
    }
    emit(a.out.as_deref(), &csv)?;
    Ok(0)
}

fn soliton(a: SolitonArgs) -> anyhow::Result<u8> {
    let params = SolitonParams::new(a.c, a.shift)?;
    let f = sample_soliton(&params, a.n, a.h)?;
    gpwf::write_field(&a.out, &f, Some(a.c)).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(0)
}

#[derive(Debug, Serialize)]
struct Check {
    value: f64,
    /// Upper bound, or lower bound for `depletion` and `lagrangian_positive`.
    bound: f64,
    pass: bool,
}

fn at_most(value: f64, tolerance: f64) -> Check {
    Check { value, bound: tolerance, pass: value <= tolerance }
}

/// Tolerances of the identity suite.
pub const EXACT_SAMPLE_RESIDUAL: f64 = 1e-3;
pub const SOLVED_RESIDUAL: f64 = 1e-9;
pub const IDENTITY_TOL: f64 = 5e-3;
pub const LIFTING_TOL: f64 = 1e-2;

fn validate(a: ValidateArgs) -> anyhow::Result<u8> {
    let (f, c) = load(&a.field, a.c)?;
    let grid = f.grid();
    let mut checks = std::collections::BTreeMap::new();
    let residual = el_residual(&f, c).max_abs();
    let functional = lagrangian(&f, c);
    if grid.dim() == 1 {
        checks.insert("el_residual", at_most(residual, EXACT_SAMPLE_RESIDUAL));
        let (g, h) = invariants_gh_1d(&f, c);
        checks.insert("invariant_g", at_most(g.max_abs(), EXACT_SAMPLE_RESIDUAL));
        checks.insert("invariant_h", at_most(h.max_abs(), EXACT_SAMPLE_RESIDUAL));
        if let Ok(e) = soliton_energy(c) {
            checks.insert("soliton_energy", at_most((functional.energy - e).abs() / e, EXACT_SAMPLE_RESIDUAL));
            let jump = 2.0 * (c / SOUND_SPEED).acos();
            checks.insert("phase_change", at_most((unwrapped_phase_change(f.values()) - jump).abs(), EXACT_SAMPLE_RESIDUAL));
        }
    } else {
        checks.insert("el_residual", at_most(residual, SOLVED_RESIDUAL));
        let (_, r2) = gpwaves::analysis::pohozaev_residuals(&f, c);
        checks.insert("pohozaev_r2", at_most(r2.abs(), IDENTITY_TOL));
        let d = grid.dim() as f64;
        let gap = (functional.lagrangian - 2.0 * functional.transverse_a / (d - 1.0)).abs() / (functional.lagrangian.abs() + 1e-10);
        checks.insert("dilation_lagrangian_gap", at_most(gap, IDENTITY_TOL));
        checks.insert("lagrangian_positive", Check { value: functional.lagrangian, bound: 0.0, pass: functional.lagrangian > 0.0 });
        let b = bound_checks(&f, c);
        checks.insert("max_modulus", Check { value: b.max_modulus, bound: b.max_modulus_bound + 5e-3, pass: b.max_modulus_ok });
        checks.insert("depletion", Check { value: b.max_depletion, bound: b.depletion_bound - 5e-3, pass: b.depletion_ok });
        let v = vortex_detect(&f, analysis::DEFAULT_BALL_RADIUS);
        checks.insert("total_winding", Check { value: v.total_winding as f64, bound: 0.0, pass: v.total_winding == 0 });
        let l = lift(&f, analysis::DEFAULT_LIFT_THRESHOLD)?;
        if l.is_vortexless() {
            let ids = lifting_momentum_identities(&l, &f, c);
            let p = functional.momentum;
            checks.insert("lifting_momentum", at_most((ids.p_lift - p).abs() / (p.abs() + 1e-10), LIFTING_TOL));
            checks.insert("lifting_identity_2", at_most(ids.id2.abs(), LIFTING_TOL));
            checks.insert("lifting_identity_3", at_most(ids.id3.abs(), LIFTING_TOL));
        }
    }
    let all_pass = checks.values().all(|c| c.pass);
    let out = json!({
        "file": a.field.display().to_string(),
        "c": c,
        "dim": grid.dim(),
        "functional": functional,
        "checks": checks,
        "all_pass": all_pass,
    });
    emit(a.out.as_deref(), &to_json(&out))?;
    Ok(if a.strict && !all_pass { 3 } else { 0 })
}
