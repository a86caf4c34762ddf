//! TOML service configuration. Every table is optional; missing keys take
//! the library defaults.
//!
//! ```toml
//! [engine]
//! listen = "127.0.0.1:8765"
//! mode = "HA"
//! rate_hz = 50.0
//! queue_capacity = 4096
//!
//! [detector]
//! close_grace_s = 0.2
//!
//! [model]
//! path = "model.txt"
//! ha_threshold = 0.85
//! ```

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use repwatch_core::eval::synthetic_model;
use repwatch_core::fusion::FusionConfig;
use repwatch_core::pipeline::PipelineConfig;
use repwatch_core::repdetect::{DetectorConfig, DnbModel, Mode};
use repwatch_core::segmentation::SegmenterConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub listen: SocketAddr,
    pub mode: Mode,
    pub rate_hz: f64,
    /// Messages buffered per client before the oldest are dropped.
    pub queue_capacity: usize,
    pub session_id: String,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8765)),
            mode: Mode::HA,
            rate_hz: 50.0,
            queue_capacity: 4096,
            session_id: "session".into(),
        }
    }
}

/// Where the model comes from plus per-field overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub path: Option<PathBuf>,
    /// Synthetic training used when `path` is unset.
    pub train_sessions: usize,
    pub train_seed: u64,
    pub ld_threshold: Option<f64>,
    pub ha_threshold: Option<f64>,
    pub dtw_accept: Option<f64>,
    pub w0: Option<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            path: None,
            train_sessions: 10,
            train_seed: 2,
            ld_threshold: None,
            ha_threshold: None,
            dtw_accept: None,
            w0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub engine: EngineConfig,
    pub fusion: FusionConfig,
    pub segmentation: SegmenterConfig,
    pub detector: DetectorConfig,
    pub model: ModelConfig,
}

impl ServiceConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            fusion: self.fusion,
            segmentation: self.segmentation,
            detector: self.detector,
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if !(self.engine.rate_hz > 0.0 && self.engine.rate_hz.is_finite()) {
            bail!("engine.rate_hz must be positive");
        }
        if self.engine.queue_capacity == 0 {
            bail!("engine.queue_capacity must be positive");
        }
        self.fusion.validate()?;
        self.segmentation.validate()?;
        self.detector.validate()?;
        Ok(())
    }

    /// Loads or trains the model, then applies the overrides.
    pub fn resolve_model(&self) -> anyhow::Result<DnbModel> {
        let mut model = match &self.model.path {
            Some(p) => DnbModel::load(p).with_context(|| format!("loading model {}", p.display()))?,
            None => synthetic_model(self.model.train_sessions, self.model.train_seed, &self.pipeline())?,
        };
        let m = &self.model;
        if let Some(v) = m.ld_threshold {
            model.ld_threshold = v;
        }
        if let Some(v) = m.ha_threshold {
            model.ha_threshold = v;
        }
        if let Some(v) = m.dtw_accept {
            model.dtw_accept = v;
        }
        if let Some(v) = m.w0 {
            model.w0 = v;
        }
        model.validate()?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(ServiceConfig::parse("").unwrap(), ServiceConfig::default());
    }

    #[test]
    fn defaults_round_trip() {
        let c = ServiceConfig::default();
        assert_eq!(ServiceConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_tables_override() {
        let c = ServiceConfig::parse(
            "[engine]\nmode = \"LD\"\n[segmentation]\nexit_hold = 30\n[detector]\nhop = 2\n[model]\nha_threshold = 0.8\n",
        )
        .unwrap();
        assert_eq!(c.engine.mode, Mode::LD);
        assert_eq!(c.segmentation.exit_hold, 30);
        assert_eq!(c.segmentation.median_window, SegmenterConfig::default().median_window);
        assert_eq!(c.detector.hop, 2);
        assert_eq!(c.model.ha_threshold, Some(0.8));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ServiceConfig::parse("[engine]\nlisten_addr = \"x\"\n").is_err());
        assert!(ServiceConfig::parse("[engine]\nrate_hz = 0\n").is_err());
        assert!(ServiceConfig::parse("[segmentation]\nexit_hold = 0\n").is_err());
        assert!(ServiceConfig::parse("[detector]\nhop = 0\n").is_err());
    }
}
