//! The TOML configuration file: one section per module.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audio::AudioConfig;
use crate::diffusion::EdmConfig;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::rhythm::RhythmConfig;
use crate::training::{SynthConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub diffusion: EdmConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub rhythm: RhythmConfig,
    pub audio: AudioConfig,
    pub synth: SynthConfig,
}

impl Config {
    /// The toy model, its training schedule and 256 Hz beat detection.
    pub fn toy() -> Self {
        let synth = SynthConfig::default();
        Config {
            model: ModelConfig::toy(),
            train: TrainConfig::toy(),
            audio: AudioConfig::for_sample_rate(synth.sample_rate),
            synth,
            ..Config::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.diffusion.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.rhythm.peaks.validate()?;
        self.audio.peaks.validate()?;
        self.synth.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::format("config file", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::format("config file", e.to_string()))
    }
}

pub fn load_config(path: &Path) -> Result<Config> {
    fs::read_to_string(path)
        .map_err(Error::from)
        .and_then(|t| Config::from_toml(&t))
        .map_err(|e| e.in_stage("cli_io", Some(path.to_path_buf())))
}
