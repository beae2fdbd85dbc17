//! Run configuration: `key = value` files layered under command-line flags.

use std::collections::BTreeMap;
use std::path::Path;

use gpwaves::minimax::{GridSpec, SolverConfig};
use gpwaves::TransverseBc;
use thiserror::Error;

#[derive(Debug, Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

impl ConfigError {
    pub fn new(msg: impl Into<String>) -> Self {
        ConfigError(msg.into())
    }
}

/// Keys accepted in config files, in the order they are documented.
pub const KEYS: &[&str] = &[
    "c",
    "N",
    "M",
    "h",
    "dim",
    "bc_transverse",
    "path_nodes",
    "descent_tol",
    "newton_tol",
    "max_descent_iters",
    "max_newton_iters",
    "seed_amplitude",
    "rng_seed",
    "perturbation",
    "compute_morse",
    "c_grid",
    "N_list",
];

pub const DEFAULT_N: f64 = 12.0;

/// Parses `key = value` lines. `#` starts a comment; blank lines are skipped.
pub fn parse_settings(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::new(format!("line {}: expected key = value", n + 1)))?;
        let (k, v) = (k.trim().replace('-', "_"), v.trim());
        if !KEYS.contains(&k.as_str()) {
            return Err(ConfigError::new(format!("line {}: unknown key `{k}`", n + 1)));
        }
        out.insert(k, v.to_string());
    }
    Ok(out)
}

pub fn read_settings(path: &Path) -> anyhow::Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_settings(&text)?)
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| ConfigError::new(format!("invalid value `{v}` for {key}")))
}

pub fn parse_bc(v: &str) -> Result<TransverseBc, ConfigError> {
    match v {
        "dirichlet" | "dirichlet_one" | "dirichlet-one" => Ok(TransverseBc::DirichletOne),
        "periodic" => Ok(TransverseBc::Periodic),
        _ => Err(ConfigError::new(format!("bc_transverse must be dirichlet or periodic, got `{v}`"))),
    }
}

pub fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(ConfigError::new(format!("invalid boolean `{v}` for {key}"))),
    }
}

/// `a:b:step`, inclusive of `b` up to rounding.
pub fn parse_range(v: &str) -> Result<Vec<f64>, ConfigError> {
    let parts: Vec<&str> = v.split(':').collect();
    if parts.len() != 3 {
        return Err(ConfigError::new(format!("expected start:stop:step, got `{v}`")));
    }
    let (a, b, s): (f64, f64, f64) = (num("c_grid", parts[0])?, num("c_grid", parts[1])?, num("c_grid", parts[2])?);
    if !(s > 0.0) || !(b >= a) {
        return Err(ConfigError::new(format!("empty or ill-formed range `{v}`")));
    }
    let count = ((b - a) / s + 1e-9).floor() as usize;
    // Rounded to 12 decimals so that 0.3 + 7 * 0.1 prints as 1.0.
    Ok((0..=count).map(|k| ((a + k as f64 * s) * 1e12).round() / 1e12).collect())
}

pub fn parse_list(key: &str, v: &str) -> Result<Vec<f64>, ConfigError> {
    v.split(',').map(|s| num(key, s.trim())).collect()
}

/// Settings for a solve or sweep before defaults are filled in.
#[derive(Debug, Clone, Default)]
pub struct Layered {
    pub settings: BTreeMap<String, String>,
}

impl Layered {
    /// Later layers win.
    pub fn overlay(&mut self, other: &BTreeMap<String, String>) {
        for (k, v) in other {
            self.settings.insert(k.clone(), v.clone());
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.settings.get(key).map(String::as_str)
    }

    /// Applies the settings on top of `base`, or on top of the built-in
    /// defaults when `base` is `None` (then `c` is required).
    pub fn solver_config(&self, base: Option<SolverConfig>) -> Result<SolverConfig, ConfigError> {
        let mut cfg = match base {
            Some(b) => b,
            None => {
                let c = match self.get("c") {
                    Some(v) => num("c", v)?,
                    None => return Err(ConfigError::new("missing required setting c")),
                };
                SolverConfig::new(
                    c,
                    GridSpec { dim: 2, half_length_x1: DEFAULT_N, half_length_transverse: 12.0, h: 0.1, bc_transverse: TransverseBc::DirichletOne },
                )
            }
        };
        for (k, v) in &self.settings {
            match k.as_str() {
                "c" => cfg.c = num(k, v)?,
                "N" => cfg.grid.half_length_x1 = num(k, v)?,
                "M" => cfg.grid.half_length_transverse = num(k, v)?,
                "h" => cfg.grid.h = num(k, v)?,
                "dim" => cfg.grid.dim = num(k, v)?,
                "bc_transverse" => cfg.grid.bc_transverse = parse_bc(v)?,
                "path_nodes" => cfg.path_nodes = num(k, v)?,
                "descent_tol" => cfg.descent_tol = num(k, v)?,
                "newton_tol" => cfg.newton_tol = num(k, v)?,
                "max_descent_iters" => cfg.max_descent_iters = num(k, v)?,
                "max_newton_iters" => cfg.max_newton_iters = num(k, v)?,
                "seed_amplitude" => cfg.seed_amplitude = num(k, v)?,
                "rng_seed" => cfg.rng_seed = num(k, v)?,
                "perturbation" => cfg.perturbation = num(k, v)?,
                "compute_morse" => cfg.compute_morse = parse_bool(k, v)?,
                "c_grid" | "N_list" => {}
                _ => return Err(ConfigError::new(format!("unknown setting `{k}`"))),
            }
        }
        Ok(cfg)
    }
}
