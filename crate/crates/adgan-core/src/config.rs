//! Unified run configuration: one JSON file carrying every tunable of the
//! pipeline. Unknown keys are rejected by name; all defaults live in the
//! `Default` impls of the component configs, so the emitted default file
//! is the single source of truth.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::TrainConfig;
use crate::masksynth::MaskSynthConfig;
use crate::model::GeneratorConfig;
use crate::phantom::PhantomParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub images_dir: PathBuf,
    pub masks_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            images_dir: "data/images".into(),
            masks_dir: "data/unpaired_masks".into(),
            out_dir: "runs/default".into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub generator: GeneratorConfig,
    pub train: TrainConfig,
    pub masksynth: MaskSynthConfig,
    pub phantom: PhantomParams,
    pub paths: PathsConfig,
}

impl RunConfig {
    /// Desk-scale preset: quarter-width model, small crops, 2k iterations.
    pub fn desk() -> Self {
        Self {
            generator: GeneratorConfig::desk(),
            train: TrainConfig::desk(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.generator
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.train.validate().map_err(ConfigError::Invalid)?;
        self.masksynth
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.phantom
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug)]
pub enum ConfigError {
    Io(std::io::Error),
    /// Parse failure; serde names unknown keys in the message.
    Parse(String),
    Invalid(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "config i/o error: {e}"),
            ConfigError::Parse(m) => write!(f, "config parse error: {m}"),
            ConfigError::Invalid(m) => write!(f, "invalid config: {m}"),
        }
    }
}

impl std::error::Error for ConfigError {}

impl From<std::io::Error> for ConfigError {
    fn from(e: std::io::Error) -> Self {
        ConfigError::Io(e)
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn save_config(cfg: &RunConfig, path: impl AsRef<Path>) -> Result<(), ConfigError> {
    let text = serde_json::to_string_pretty(cfg).expect("config serializes");
    std::fs::write(path.as_ref(), text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_lossless() {
        let cfg = RunConfig::desk();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let text = r#"{"train": {"total_iters": 5, "warp_factor": 9}}"#;
        let err = serde_json::from_str::<RunConfig>(text).unwrap_err().to_string();
        assert!(err.contains("warp_factor"), "{err}");
    }

    #[test]
    fn spec_defaults_appear_in_default_config() {
        let cfg = RunConfig::default();
        let v = serde_json::to_value(&cfg).unwrap();
        assert_eq!(v["train"]["total_iters"], 10_000);
        assert_eq!(v["train"]["const_lr_iters"], 5_000);
        assert_eq!(v["train"]["lr"], 1e-4);
        assert_eq!(v["train"]["weight_decay"], 1e-4);
        assert_eq!(v["train"]["adam_betas"][0], 0.5);
        assert_eq!(v["train"]["adam_betas"][1], 0.999);
        assert_eq!(v["train"]["batch_size"], 16);
        assert_eq!(v["train"]["crop"], 256);
        assert_eq!(v["train"]["weights"]["lambda_rec"], 20.0);
        assert_eq!(v["train"]["weights"]["lambda_cyc"], 20.0);
        assert_eq!(v["train"]["weights"]["lambda_ctr"], 1.0);
        assert_eq!(v["train"]["flags"]["aligned_training"], true);
        assert_eq!(v["train"]["checkpoint_interval"], 1_000);
        assert_eq!(v["generator"]["base_channels"], 64);
        assert_eq!(v["generator"]["content_channels"], 256);
        assert_eq!(v["generator"]["n_res_blocks_enc"], 4);
        assert_eq!(v["generator"]["n_res_blocks_dec"], 4);
        assert_eq!(v["generator"]["image_channels"], 1);
        assert_eq!(v["masksynth"]["e_range"][0], 0.25);
        assert_eq!(v["masksynth"]["e_range"][1], 0.75);
        assert_eq!(v["masksynth"]["max_attempts_per_object"], 100);
        assert_eq!(v["phantom"]["peak_intensity_range"][0], 0.6);
        assert_eq!(v["phantom"]["peak_intensity_range"][1], 1.0);
        assert_eq!(v["phantom"]["radial_falloff"], 0.5);
        assert_eq!(v["phantom"]["blur_sigma"], 1.0);
        assert_eq!(v["phantom"]["noise_sigma"], 0.03);
        assert_eq!(v["phantom"]["background_level"], 0.05);
    }

    #[test]
    fn save_load_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        let cfg = RunConfig::desk();
        save_config(&cfg, &path).unwrap();
        let back = load_config(&path).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn invalid_values_fail_validation() {
        let mut cfg = RunConfig::default();
        cfg.train.const_lr_iters = cfg.train.total_iters + 1;
        assert!(cfg.validate().is_err());
    }
}
