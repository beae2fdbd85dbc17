mod commands;
mod config;
mod manifest;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gpwaves::analysis::AnalysisError;
use gpwaves::functionals::FunctionalError;
use gpwaves::gpwf::GpwfError;
use gpwaves::grid::GridError;
use gpwaves::minimax::MinimaxError;
use gpwaves::morse::MorseError;
use gpwaves::onedim::OneDimError;

use crate::config::ConfigError;

/// Traveling waves of the Gross-Pitaevskii equation: mountain-pass solves,
/// speed sweeps and solution diagnostics.
#[derive(Debug, Parser)]
#[command(name = "gpwaves", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute one traveling wave; writes field.gpwf, report.json,
    /// path-profile.csv and manifest.json into --out.
    Solve(SolveArgs),
    /// Solve over a grid of speeds and slab lengths; writes sweep.csv,
    /// sweep.json and manifest.json into --out.
    Sweep(SweepArgs),
    /// Functionals, identities, vortices, sublevel measures and decay fit of
    /// a stored field, as JSON.
    Analyze(FileArgs),
    /// Morse index of a stored field, as JSON.
    Morse(MorseArgs),
    /// Morse index of circular solutions on intervals of growing length, as CSV.
    CircularScan(CircularArgs),
    /// Write an exactly sampled 1-D dark soliton.
    Soliton(SolitonArgs),
    /// Run the identity suite on a stored field and print the residuals as JSON.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct SolverFlags {
    /// Speed, 0 < c < sqrt 2.
    #[arg(long)]
    pub c: Option<f64>,
    /// Half-length of the slab in x1.
    #[arg(long = "N")]
    pub n: Option<f64>,
    /// Transverse half-width.
    #[arg(long = "M")]
    pub m: Option<f64>,
    /// Grid spacing.
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// dirichlet or periodic.
    #[arg(long = "bc-transverse")]
    pub bc_transverse: Option<String>,
    #[arg(long)]
    pub path_nodes: Option<usize>,
    #[arg(long)]
    pub descent_tol: Option<f64>,
    #[arg(long)]
    pub newton_tol: Option<f64>,
    #[arg(long)]
    pub max_descent_iters: Option<usize>,
    #[arg(long)]
    pub max_newton_iters: Option<usize>,
    #[arg(long)]
    pub seed_amplitude: Option<f64>,
    #[arg(long = "seed")]
    pub rng_seed: Option<u64>,
    #[arg(long)]
    pub perturbation: Option<f64>,
    /// Skip the Morse index of the converged field.
    #[arg(long)]
    pub no_morse: bool,
    /// key = value settings, overridden by flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Re-run the configuration recorded in a manifest.json; flags still win.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

impl SolverFlags {
    pub fn settings(&self) -> BTreeMap<String, String> {
        let mut s = BTreeMap::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                s.insert(k.to_string(), v);
            }
        };
        put("c", self.c.map(|v| v.to_string()));
        put("N", self.n.map(|v| v.to_string()));
        put("M", self.m.map(|v| v.to_string()));
        put("h", self.h.map(|v| v.to_string()));
        put("dim", self.dim.map(|v| v.to_string()));
        put("bc_transverse", self.bc_transverse.clone());
        put("path_nodes", self.path_nodes.map(|v| v.to_string()));
        put("descent_tol", self.descent_tol.map(|v| v.to_string()));
        put("newton_tol", self.newton_tol.map(|v| v.to_string()));
        put("max_descent_iters", self.max_descent_iters.map(|v| v.to_string()));
        put("max_newton_iters", self.max_newton_iters.map(|v| v.to_string()));
        put("seed_amplitude", self.seed_amplitude.map(|v| v.to_string()));
        put("rng_seed", self.rng_seed.map(|v| v.to_string()));
        put("perturbation", self.perturbation.map(|v| v.to_string()));
        if self.no_morse {
            put("compute_morse", Some("false".into()));
        }
        s
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub solver: SolverFlags,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub solver: SolverFlags,
    /// Speeds as start:stop:step.
    #[arg(long = "c-grid", conflicts_with = "c_list")]
    pub c_grid: Option<String>,
    /// Speeds as a comma-separated list.
    #[arg(long = "c-list")]
    pub c_list: Option<String>,
    /// Slab half-lengths as a comma-separated list (default: N).
    #[arg(long = "N-list")]
    pub n_list: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FileArgs {
    pub field: PathBuf,
    /// Speed; defaults to the one stored with the field.
    #[arg(long)]
    pub c: Option<f64>,
    /// Write the JSON here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = gpwaves::analysis::DEFAULT_LIFT_THRESHOLD)]
    pub lift_threshold: f64,
    #[arg(long, default_value_t = gpwaves::analysis::DEFAULT_BALL_RADIUS)]
    pub ball_radius: f64,
}

#[derive(Debug, Args)]
pub struct MorseArgs {
    pub field: PathBuf,
    #[arg(long)]
    pub c: Option<f64>,
    /// Eigenvalues below this count as negative.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub cutoff: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CircularArgs {
    #[arg(long)]
    pub c: f64,
    /// rho0^2 of the circular solution.
    #[arg(long)]
    pub rho2: f64,
    /// Interval lengths, comma-separated.
    #[arg(long)]
    pub lengths: String,
    #[arg(long, default_value_t = 0.1)]
    pub h: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolitonArgs {
    #[arg(long)]
    pub c: f64,
    /// Half-length of the sampled interval.
    #[arg(long = "N")]
    pub n: f64,
    #[arg(long)]
    pub h: f64,
    /// Centre of the soliton.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub shift: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub field: PathBuf,
    #[arg(long)]
    pub c: Option<f64>,
    /// Exit with status 3 when any check fails.
    #[arg(long)]
    pub strict: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Maps an error to the documented exit status: 2 for configuration,
/// 3 for numerical failure, 4 for I/O.
fn exit_status(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() || cause.is::<GridError>() || cause.is::<OneDimError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<MinimaxError>() {
            return if e.is_numerical() { 3 } else { 2 };
        }
        if let Some(e) = cause.downcast_ref::<FunctionalError>() {
            return if matches!(e, FunctionalError::NotSubsonic(_)) { 2 } else { 3 };
        }
        if let Some(e) = cause.downcast_ref::<MorseError>() {
            return match e {
                MorseError::Domain(_) | MorseError::OneDim(_) | MorseError::Functional(FunctionalError::NotSubsonic(_)) => 2,
                _ => 3,
            };
        }
        if cause.is::<GpwfError>() || cause.is::<std::io::Error>() {
            return 4;
        }
        if cause.is::<AnalysisError>() {
            return 3;
        }
    }
    3
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status, printing errors to standard error.
pub fn run_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match commands::run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            exit_status(&err)
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(run_args(std::env::args_os()))
}
