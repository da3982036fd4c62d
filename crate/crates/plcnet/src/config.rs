//! TOML run configuration.
//!
//! Every field has a default, so a config file only names what it changes:
//!
//! ```toml
//! sample_rate = 8000
//! precision = "f32"
//!
//! [predictor]
//! hidden = 80
//! window_len = 80
//! time_steps = 160
//! passes = 20
//!
//! [predictor.adam]
//! alpha = 1e-3
//! clip_norm = 1.0   # 0 disables clipping
//!
//! [loss]
//! rate = 0.1
//! mode = "even"     # or "random"
//! seed = 0
//! ```
//!
//! Unknown keys are rejected rather than ignored: a misspelled field in an
//! experiment config silently falling back to its default would corrupt
//! results. Command-line flags override file values; the merged result is
//! echoed into every artifact a run produces.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::LossMode;
use crate::predictor::PredictorConfig;
use crate::{PlcError, Result};

/// Runtime scalar width. f32 is the operating mode; f64 exists to compare
/// against reference numerics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

/// Loss simulation parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSpec {
    /// Fraction of frames to drop, in [0, 1].
    pub rate: f64,
    pub mode: LossMode,
    /// Seed for the random mode; the even mode ignores it.
    pub seed: u64,
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec { rate: 0.1, mode: LossMode::Even, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Expected input sample rate; a file at a different rate is an error,
    /// not a resampling request.
    pub sample_rate: u32,
    pub precision: Precision,
    pub predictor: PredictorConfig,
    pub loss: LossSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            sample_rate: 8000,
            precision: Precision::F32,
            predictor: PredictorConfig::default(),
            loss: LossSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(PlcError::Config("sample_rate must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.loss.rate) {
            return Err(PlcError::Config(format!(
                "loss rate must be in [0, 1], got {}",
                self.loss.rate
            )));
        }
        self.predictor.validate()
    }

    /// JSON rendering of the full merged configuration, embedded in metric
    /// reports and frame logs so artifacts are self-describing.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| PlcError::io(path, e))?;
    let cfg: RunConfig = toml::from_str(&text)
        .map_err(|e| PlcError::Config(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_survive_a_toml_round_trip() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_files_fill_in_defaults() {
        let cfg: RunConfig = toml::from_str("[predictor]\nhidden = 16\n").unwrap();
        assert_eq!(cfg.predictor.hidden, 16);
        assert_eq!(cfg.predictor.frame_len, PredictorConfig::default().frame_len);
        assert_eq!(cfg.sample_rate, 8000);
        assert_eq!(cfg.precision, Precision::F32);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<RunConfig>("hiden = 16\n").unwrap_err();
        assert!(err.to_string().contains("hiden"), "got: {err}");
        let err = toml::from_str::<RunConfig>("[predictor]\nhiden = 16\n").unwrap_err();
        assert!(err.to_string().contains("hiden"), "got: {err}");
    }

    #[test]
    fn clip_norm_zero_disables_clipping() {
        let cfg: RunConfig = toml::from_str("[predictor.adam]\nclip_norm = 0.0\n").unwrap();
        assert_eq!(cfg.predictor.adam.clip_norm, None);
        let cfg: RunConfig = toml::from_str("[predictor.adam]\nclip_norm = 2.5\n").unwrap();
        assert_eq!(cfg.predictor.adam.clip_norm, Some(2.5));
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg.predictor.adam.clip_norm, Some(1.0));
    }

    #[test]
    fn validation_catches_bad_rates() {
        let mut cfg = RunConfig::default();
        cfg.loss.rate = 1.5;
        assert!(matches!(cfg.validate(), Err(PlcError::Config(_))));
        cfg.loss.rate = 0.1;
        cfg.sample_rate = 0;
        assert!(matches!(cfg.validate(), Err(PlcError::Config(_))));
    }

    #[test]
    fn loss_modes_parse_by_name() {
        let cfg: RunConfig = toml::from_str("[loss]\nmode = \"random\"\nrate = 0.3\n").unwrap();
        assert_eq!(cfg.loss.mode, LossMode::Random);
        assert!(toml::from_str::<RunConfig>("[loss]\nmode = \"sometimes\"\n").is_err());
    }

    #[test]
    fn echo_is_complete_json() {
        let echo = RunConfig::default().echo();
        assert_eq!(echo["sample_rate"], 8000);
        assert_eq!(echo["predictor"]["hidden"], 80);
        assert_eq!(echo["loss"]["mode"], "even");
    }

    #[test]
    fn load_reports_the_file_in_errors() {
        match load_config("/nonexistent/run.toml") {
            Err(PlcError::Io { path, .. }) => {
                assert!(path.to_string_lossy().contains("run.toml"))
            }
            other => panic!("expected io error, got {:?}", other.map(|_| ())),
        }
    }
}
