//! Experiment configuration: the scenario plus mask, cache, training,
//! demonstration and evaluation sections.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hvaclab_core::dqn::TrainConfig;
use hvaclab_core::mask::{CacheConfig, MaskProviderConfig};
use hvaclab_core::Scenario;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemoConfig {
    /// Existing demonstration CSV; generated from `days` and `seed` when absent.
    pub path: Option<PathBuf>,
    pub days: usize,
    pub seed: u64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            path: None,
            days: 16,
            seed: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub episodes: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { episodes: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    /// Seed for single-seed commands.
    pub seed: u64,
    pub demos: DemoConfig,
    pub mask: MaskProviderConfig,
    pub cache: CacheConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub scenario: Scenario,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Config = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    /// Built-in defaults, overridden by the file when one is given.
    pub fn resolve(path: Option<&Path>) -> Result<Self> {
        let cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate().context("scenario")?;
        self.mask.validate().context("mask")?;
        self.cache.validate().context("cache")?;
        self.train.validate().context("train")?;
        anyhow::ensure!(self.demos.days > 0, "demos.days must be positive");
        anyhow::ensure!(self.eval.episodes > 0, "eval.episodes must be positive");
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}
