//! Run configuration: a JSON file with every tunable, overridden by flags.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use fluency_core::head::{Architecture, FcStackConfig, HeadConfig};
use fluency_core::layers::LayerScheme;
use fluency_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config {}: {source}", path.display())]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("config {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Invalid(String),
}

/// Head settings that do not depend on the data. The input width comes from
/// the embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadSettings {
    pub architecture: Architecture,
    pub pre_pool: FcStackConfig,
    pub post_pool: FcStackConfig,
    pub learnable_prelu: bool,
}

impl Default for HeadSettings {
    fn default() -> Self {
        let c = HeadConfig::new(Architecture::Vanilla, 1);
        Self {
            architecture: c.architecture,
            pre_pool: c.pre_pool,
            post_pool: c.post_pool,
            learnable_prelu: c.learnable_prelu,
        }
    }
}

impl HeadSettings {
    pub fn build(&self, input_dim: usize) -> HeadConfig {
        HeadConfig {
            architecture: self.architecture,
            input_dim,
            pre_pool: self.pre_pool.clone(),
            post_pool: self.post_pool.clone(),
            learnable_prelu: self.learnable_prelu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSettings {
    /// Fraction of recordings (by speaker) used to pick the best dimension.
    pub train_ratio: f64,
    pub absolute: bool,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self {
            train_ratio: 0.8,
            absolute: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub manifest: Option<PathBuf>,
    pub folds: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Everything needed to reproduce a run. `seed` drives folds, initialisation,
/// shuffling, dropout and the probe split; `train.seed` always mirrors it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub n_folds: usize,
    /// Validation fold for `train`; every other fold is used for training.
    pub val_fold: usize,
    pub layers: LayerScheme,
    pub head: HeadSettings,
    pub train: TrainConfig,
    pub probe: ProbeSettings,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_folds: 6,
            val_fold: 0,
            layers: LayerScheme::Gaussian { sigma: None },
            head: HeadSettings::default(),
            train: TrainConfig::default(),
            probe: ProbeSettings::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("run config serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        fs::write(path, self.to_json())
    }

    /// Keeps the derived fields consistent and rejects impossible settings.
    pub fn finish(mut self) -> Result<Self, ConfigError> {
        self.train.seed = self.seed;
        self.train
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.head
            .build(1)
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.n_folds < 3 {
            return Err(ConfigError::Invalid("n_folds must be at least 3".into()));
        }
        if self.val_fold >= self.n_folds {
            return Err(ConfigError::Invalid(format!(
                "val_fold {} outside 0..{}",
                self.val_fold, self.n_folds
            )));
        }
        if !(self.probe.train_ratio > 0.0 && self.probe.train_ratio < 1.0) {
            return Err(ConfigError::Invalid("probe.train_ratio must be in (0, 1)".into()));
        }
        Ok(self)
    }
}
