//! Run manifests: enough to reproduce a run, plus hashes of what it read
//! and wrote.

use std::hash::Hasher;
use std::path::Path;

use gpwaves::minimax::{GridSpec, SolverConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    /// 64-bit FNV-1a of the file bytes, lower-case hex.
    pub fnv1a: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub c_values: Vec<f64>,
    #[serde(rename = "N_values")]
    pub n_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: SolverConfig,
    pub grid: GridSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    pub threads: usize,
    pub started: String,
    pub finished: String,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    /// `git describe` of the source tree at build time.
    pub source: Option<String>,
}

pub fn fnv1a(bytes: &[u8]) -> String {
    let mut h = fnv::FnvHasher::default();
    h.write(bytes);
    format!("{:016x}", h.finish())
}

pub fn hash_file(path: &Path) -> std::io::Result<FileHash> {
    let bytes = std::fs::read(path)?;
    Ok(FileHash { path: path.display().to_string(), fnv1a: fnv1a(&bytes) })
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub fn source_id() -> Option<String> {
    option_env!("GPWAVES_GIT_DESCRIBE").filter(|s| !s.is_empty()).map(str::to_string)
}

impl RunManifest {
    pub fn new(command: &str, config: &SolverConfig, threads: usize, started: String) -> Self {
        RunManifest {
            tool: "gpwaves".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: config.clone(),
            grid: config.grid,
            sweep: None,
            threads,
            started,
            finished: String::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            source: source_id(),
        }
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| crate::config::ConfigError::new(format!("manifest {}: {e}", path.display())).into())
    }
}
