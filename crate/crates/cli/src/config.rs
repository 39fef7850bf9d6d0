//! TOML run configuration.

use std::path::{Path, PathBuf};

use asc_rfl::nn::NetworkConfig;
use asc_rfl::pipeline::FeatureRecipe;
use asc_rfl::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::{read_text, CliError, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audio_dir: Option<PathBuf>,
    /// Undecomposed log-mel cache (baseline input).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features_dir: Option<PathBuf>,
    /// Decomposed component cache (every other regime).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub components_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub recipe: FeatureRecipe,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub paths: Paths,
    /// Seed of the random halving of shared cities when the manifest has
    /// no split column.
    pub split_seed: u64,
}

impl RunConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Parse {
            path: origin.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&read_text(path)?, path)
    }

    /// The configuration at `path`, or the defaults when `path` is `None`.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| CliError::Parse {
            path: PathBuf::from("<config>"),
            reason: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use asc_rfl::losses::LossSpec;
    use asc_rfl::train::Regime;

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.train.regime = Regime::Rfl;
        cfg.train.aux_spec = Some(LossSpec::rce(0.5).unwrap());
        cfg.paths.features_dir = Some("cache/full".into());
        cfg.recipe = FeatureRecipe::sdbd(201);
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::from_toml_str(&text, Path::new("x.toml")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = RunConfig::from_toml_str("[train]\nepochs = 3\n", Path::new("x.toml")).unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.batch_size, TrainConfig::default().batch_size);
        assert_eq!(cfg.network, NetworkConfig::default());
    }

    #[test]
    fn unknown_regime_is_rejected() {
        assert!(RunConfig::from_toml_str("[train]\nregime = \"fancy\"\n", Path::new("x.toml")).is_err());
    }
}
