//! The pipeline config file (TOML). Every section is optional and falls back
//! to library defaults; unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use atl_core::filters::FilterConfig;
use atl_core::ga::GaConfig;
use atl_core::metrics::BF1_TOLERANCE;
use atl_core::orchestrator::{LoopConfig, ProcessConfig};
use atl_core::repair::RepairConfig;
use atl_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricOptions {
    /// Boundary F1 match distance in pixels.
    pub bf1_tolerance: f64,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            bf1_tolerance: BF1_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Workspace root for `loop`; relative paths resolve against the
    /// directory holding the config file.
    pub workspace: PathBuf,
    pub log_level: String,
    pub filter: FilterConfig,
    pub ga: GaConfig,
    pub repair: RepairConfig,
    #[serde(rename = "loop")]
    pub loop_: LoopConfig,
    pub metrics: MetricOptions,
    /// Watched directory of hand-adjusted labels for External mode.
    pub external_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            workspace: PathBuf::from("."),
            log_level: "info".into(),
            filter: FilterConfig::default(),
            ga: GaConfig::default(),
            repair: RepairConfig::default(),
            loop_: LoopConfig::default(),
            metrics: MetricOptions::default(),
            external_dir: None,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg: Self =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if cfg.workspace.is_relative() {
            cfg.workspace = base.join(&cfg.workspace);
        }
        if let Some(d) = &cfg.external_dir {
            if d.is_relative() {
                cfg.external_dir = Some(cfg.workspace.join(d));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        self.ga.validate()?;
        self.repair.validate()?;
        self.loop_.validate()?;
        if !(self.metrics.bf1_tolerance >= 0.0 && self.metrics.bf1_tolerance.is_finite()) {
            return Err(Error::Config("metrics.bf1_tolerance must be a non-negative number".into()));
        }
        self.log_filter()?;
        Ok(())
    }

    pub fn log_filter(&self) -> Result<log::LevelFilter> {
        self.log_level
            .parse()
            .map_err(|_| Error::Config(format!("unknown log_level {:?}", self.log_level)))
    }

    pub fn process_config(&self) -> ProcessConfig {
        ProcessConfig {
            filter: self.filter.clone(),
            ga: self.ga.clone(),
            repair: self.repair.clone(),
            external_dir: self.external_dir.clone(),
        }
    }
}
