//! Configuration, experiment dispatch and artifact manifests for `volac`.

pub mod config;
mod experiments;

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{ConfigError, ExperimentConfig, Kind};

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "VOLAC_WORKERS";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    /// 1 for validation and input problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Numerical(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: Kind,
    /// Hash of the configuration with the output directory blanked.
    pub config_sha256: String,
    pub status: String,
    /// Per-item failures that did not abort the run.
    pub failures: Vec<String>,
    pub artifacts: Vec<ArtifactEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, RunError> {
        serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| RunError::Input(format!("{}: {e}", path.display())))
    }

    /// Rehashes every listed artifact under `dir`.
    pub fn verify(&self, dir: &Path) -> Result<(), String> {
        for a in &self.artifacts {
            let p = dir.join(&a.path);
            let h = sha256_file(&p).map_err(|e| format!("{}: {e}", a.path))?;
            if h != a.sha256 {
                return Err(format!("{}: hash mismatch", a.path));
            }
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut f = fs::File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Worker count: explicit config value, else `VOLAC_WORKERS`, else 1.
pub fn resolve_workers(cfg: &ExperimentConfig) -> Result<usize, ConfigError> {
    if let Some(w) = cfg.workers {
        return Ok(w);
    }
    match std::env::var(WORKERS_ENV) {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(w) if w >= 1 => Ok(w),
            _ => Err(ConfigError::Invalid {
                field: "workers",
                message: format!("{WORKERS_ENV}={s} is not a positive integer"),
            }),
        },
        Err(_) => Ok(1),
    }
}

/// Files written by an experiment, relative to the output directory.
#[derive(Debug, Default)]
pub(crate) struct Outputs {
    pub files: Vec<PathBuf>,
    pub failures: Vec<String>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub manifest_path: PathBuf,
    pub manifest: Manifest,
}

/// Validates the configuration, runs the experiment and writes
/// `manifest.json` next to the artifacts. A numerical failure still writes
/// the manifest (status `numerical_failure`) before returning the error.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome, RunError> {
    cfg.validate()?;
    let workers = resolve_workers(cfg)?;
    fs::create_dir_all(&cfg.output)?;
    let mut out = Outputs::default();
    let (status, failure) = match experiments::dispatch(cfg, workers, &mut out) {
        Ok(()) => ("ok", None),
        Err(RunError::Numerical(msg)) => {
            out.failures.push(msg.clone());
            ("numerical_failure", Some(msg))
        }
        Err(e) => return Err(e),
    };
    let manifest = write_manifest(cfg, status, &out)?;
    match failure {
        None => Ok(manifest),
        Some(msg) => Err(RunError::Numerical(msg)),
    }
}

fn write_manifest(cfg: &ExperimentConfig, status: &str, out: &Outputs) -> Result<RunOutcome, RunError> {
    let mut files: Vec<&PathBuf> = out.files.iter().collect();
    files.sort();
    files.dedup();
    let mut artifacts = Vec::with_capacity(files.len());
    for f in files {
        let p = cfg.output.join(f);
        artifacts.push(ArtifactEntry {
            path: f.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"),
            sha256: sha256_file(&p)?,
            bytes: fs::metadata(&p)?.len(),
        });
    }
    let mut blank = cfg.clone();
    blank.output = PathBuf::new();
    let manifest = Manifest {
        kind: cfg.kind,
        config_sha256: sha256_hex(blank.canonical_json().as_bytes()),
        status: status.to_string(),
        failures: out.failures.clone(),
        artifacts,
    };
    let path = cfg.output.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest).expect("manifest serialises") + "\n")?;
    Ok(RunOutcome {
        manifest_path: path,
        manifest,
    })
}
