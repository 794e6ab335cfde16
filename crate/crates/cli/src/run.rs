//! Run directories and their manifests.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::Config;

pub const MANIFEST: &str = "manifest.json";
pub const OUT_ENV: &str = "HVAC_LAB_OUT";
const DEFAULT_ROOT: &str = "runs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Command-line arguments after the program name.
    pub args: Vec<String>,
    pub config_path: Option<PathBuf>,
    pub config: Config,
    pub seeds: Vec<u64>,
    pub version: String,
    pub output_dir: PathBuf,
    pub started_unix_s: u64,
    pub elapsed_s: f64,
}

pub struct RunDir {
    pub path: PathBuf,
    command: String,
    started: Instant,
    started_unix_s: u64,
}

impl RunDir {
    /// `out` when given, else `<$HVAC_LAB_OUT or runs>/<command>-<unix ms>`.
    pub fn create(out: Option<&Path>, command: &str) -> Result<Self> {
        let now = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
        let path = match out {
            Some(p) => p.to_path_buf(),
            None => {
                let root = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| DEFAULT_ROOT.into());
                root.join(format!("{command}-{}", now.as_millis()))
            }
        };
        std::fs::create_dir_all(&path).with_context(|| format!("creating run directory {}", path.display()))?;
        Ok(Self {
            path,
            command: command.to_string(),
            started: Instant::now(),
            started_unix_s: now.as_secs(),
        })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        std::fs::write(self.file(name), text + "\n").with_context(|| format!("writing {name}"))
    }

    pub fn finish(self, config_path: Option<&Path>, config: &Config, seeds: Vec<u64>) -> Result<PathBuf> {
        let manifest = RunManifest {
            command: self.command.clone(),
            args: std::env::args().skip(1).collect(),
            config_path: config_path.map(Path::to_path_buf),
            config: config.clone(),
            seeds,
            version: env!("CARGO_PKG_VERSION").to_string(),
            output_dir: self.path.clone(),
            started_unix_s: self.started_unix_s,
            elapsed_s: self.started.elapsed().as_secs_f64(),
        };
        self.write_json(MANIFEST, &manifest)?;
        Ok(self.path)
    }
}
