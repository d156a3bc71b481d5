//! Pipeline configuration, read from and written to TOML.
//!
//! Every section is optional in a config file; missing keys take the
//! defaults below. The top-level `seed` is the master seed and overrides the
//! seeds nested in `decomp` and `train`.

use std::path::Path;

use mudec_core::decomp::DecompConfig;
use mudec_core::dsp::WindowSpec;
use mudec_core::models::{ModelConfig, SnnConfig, TcnConfig};
use mudec_core::synthgen::ScenarioName;
use mudec_core::train::{FitConfig, SplitScheme};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub dsp: DspConfig,
    pub decomp: DecompSettings,
    pub window: WindowSpec,
    pub split: SplitScheme,
    pub model: ModelSettings,
    pub train: FitConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataConfig::default(),
            dsp: DspConfig::default(),
            decomp: DecompSettings::default(),
            window: WindowSpec::default(),
            split: SplitScheme::default(),
            model: ModelSettings::default(),
            train: FitConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub scenario: ScenarioName,
    /// Overrides every trial's duration; the force trapezoid is scaled in
    /// time by the same factor.
    pub trial_duration_s: Option<f64>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { scenario: ScenarioName::Easy, trial_duration_s: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DspConfig {
    pub notch_hz: f64,
    pub notch_q: f64,
    pub highpass_order: usize,
    pub highpass_hz: f64,
    pub force_lowpass_order: usize,
    pub force_lowpass_hz: f64,
    pub feature_rate_hz: f64,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self {
            notch_hz: 60.0,
            notch_q: 35.0,
            highpass_order: 6,
            highpass_hz: 20.0,
            force_lowpass_order: 4,
            force_lowpass_hz: 10.0,
            feature_rate_hz: 200.0,
        }
    }
}

/// What the decoders see: one summed drive per muscle group, or one drive
/// per retained unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    #[default]
    PerGroup,
    PerMu,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct DecompSettings {
    pub feature_mode: FeatureMode,
    #[serde(flatten)]
    pub params: DecompConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Tcn,
    Snn,
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tcn" => Ok(Self::Tcn),
            "snn" => Ok(Self::Snn),
            other => Err(format!("unknown model '{other}', expected tcn or snn")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub kind: ModelKind,
    pub tcn: TcnConfig,
    pub snn: SnnConfig,
}

impl ModelSettings {
    pub fn selected(&self) -> ModelConfig {
        match self.kind {
            ModelKind::Tcn => ModelConfig::Tcn(self.tcn.clone()),
            ModelKind::Snn => ModelConfig::Snn(self.snn.clone()),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.set_seed(cfg.seed);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable as TOML")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| CliError::io(path, e))
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.decomp.params.seed = seed;
        self.train.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dsp;
        let positive = [d.notch_hz, d.notch_q, d.highpass_hz, d.force_lowpass_hz, d.feature_rate_hz];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(CliError::Config(format!("dsp frequencies and Q must be positive: {d:?}")));
        }
        if d.highpass_order == 0 || d.force_lowpass_order == 0 {
            return Err(CliError::Config("filter orders must be at least 1".into()));
        }
        if let Some(t) = self.data.trial_duration_s {
            if !(t > 0.0 && t.is_finite()) {
                return Err(CliError::Config(format!("trial_duration_s must be positive, got {t}")));
            }
        }
        if self.window.len == 0 || self.window.stride == 0 || !(self.window.shift_ms >= 0.0) {
            return Err(CliError::Config(format!("invalid window settings {:?}", self.window)));
        }
        if self.train.batch_size == 0 || self.train.max_epochs == 0 {
            return Err(CliError::Config("batch_size and max_epochs must be positive".into()));
        }
        self.train.adam.validate()?;
        self.model.tcn.validate()?;
        self.model.snn.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = PipelineConfig::default();
        let back = PipelineConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = PipelineConfig::from_toml("seed = 7\n[model]\nkind = \"snn\"\n[train]\nmax_epochs = 3\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.decomp.params.seed, 7);
        assert_eq!(cfg.train.seed, 7);
        assert_eq!(cfg.train.max_epochs, 3);
        assert_eq!(cfg.train.batch_size, 32);
        assert_eq!(cfg.model.kind, ModelKind::Snn);
        assert_eq!(cfg.window, WindowSpec::default());
    }

    #[test]
    fn unknown_top_level_key_is_a_config_error() {
        let err = PipelineConfig::from_toml("sed = 1\n").unwrap_err();
        assert_eq!(err.exit_code(), crate::error::EXIT_CONFIG);
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut cfg = PipelineConfig::default();
        cfg.dsp.notch_q = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::default();
        cfg.window.stride = 0;
        assert!(cfg.validate().is_err());
        assert!(PipelineConfig::default().validate().is_ok());
    }
}
