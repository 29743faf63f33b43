//! Run configuration file: network, training and data sections.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::NetConfig;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Std of Gaussian pixel noise added to projected 2D inputs.
    pub noise_std: f64,
    /// Hold out sequence number 3 for evaluation; otherwise train on everything.
    pub holdout: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            noise_std: 0.0,
            holdout: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub net: NetConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.net.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.train.validate()?;
        if self.net.window != self.train.window {
            return Err(Error::Config(format!(
                "net.window ({}) and train.window ({}) differ",
                self.net.window, self.train.window
            )));
        }
        if !(self.data.noise_std.is_finite() && self.data.noise_std >= 0.0) {
            return Err(Error::Config("data.noise_std must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Sets the window length of both the network and the training loop.
    pub fn set_window(&mut self, window: usize) {
        self.net.window = window;
        self.train.window = window;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
        assert_eq!(RunConfig::from_toml("").unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(RunConfig::from_toml("[train]\nepochz = 3\n").is_err());
        assert!(RunConfig::from_toml("bogus = 1\n").is_err());
        assert!(RunConfig::from_toml("[train]\nbatch_size = 0\n").is_err());
        assert!(RunConfig::from_toml("[train]\nwindow = 5\n").is_err());
        let cfg = RunConfig::from_toml("[train]\nwindow = 5\n[net]\nwindow = 5\n").unwrap();
        assert_eq!(cfg.train.window, 5);
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let cfg = RunConfig::from_toml("[train]\nepochs = 7\nclip_norm = 10.0\n").unwrap();
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.train.clip_norm, Some(10.0));
        assert_eq!(cfg.train.batch_size, 256);
    }
}
