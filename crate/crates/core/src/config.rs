//! Experiment configuration, read from TOML.
//!
//! Every field is optional in the file; missing ones take the defaults shown
//! in `config/default.toml`, which is also embedded in the binary.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learn::PpoConfig;
use crate::reward::RewardWeights;
use crate::sim::SimConfig;

pub const DEFAULT_CONFIG: &str = include_str!("../config/default.toml");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSettings {
    /// Training episodes per agent.
    pub episodes: u64,
    pub eval_episodes: u32,
    /// Training seeds; the first one is used where a single run is needed.
    pub seeds: Vec<u64>,
    /// Evaluation episode `i` uses seed `eval_seed + i`.
    pub eval_seed: u64,
    /// Write a checkpoint every this many training episodes (0 = only at the end).
    pub checkpoint_every: u64,
    /// Run independent episodes on all cores.
    pub parallel: bool,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            episodes: 200,
            eval_episodes: 50,
            seeds: vec![7],
            eval_seed: 1_000_000,
            checkpoint_every: 50,
            parallel: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    pub reward: RewardWeights,
    pub ppo: PpoConfig,
    pub experiment: ExperimentSettings,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        ExperimentConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.sim.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.ppo.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !self.reward.is_valid() {
            return Err(ConfigError::Invalid("reward weights must be finite and non-negative".into()));
        }
        let e = &self.experiment;
        if e.eval_episodes == 0 {
            return Err(ConfigError::Invalid("eval_episodes must be at least 1".into()));
        }
        if e.seeds.is_empty() {
            return Err(ConfigError::Invalid("at least one seed is required".into()));
        }
        if e.seeds.iter().collect::<HashSet<_>>().len() != e.seeds.len() {
            return Err(ConfigError::Invalid("seeds must be distinct".into()));
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.experiment.seeds[0]
    }

    pub fn eval_seeds(&self) -> Vec<u64> {
        let base = self.experiment.eval_seed;
        (0..self.experiment.eval_episodes as u64).map(|i| base + i).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedded_default_matches_code_defaults() {
        assert_eq!(ExperimentConfig::from_toml(DEFAULT_CONFIG).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn empty_file_gives_defaults_and_round_trips() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn invalid_files_are_rejected() {
        assert!(ExperimentConfig::from_toml("[experiment]\neval_episodes = 0").is_err());
        assert!(ExperimentConfig::from_toml("[experiment]\nseeds = [1, 1]").is_err());
        assert!(ExperimentConfig::from_toml("[reward]\nsafety = -1.0").is_err());
        assert!(ExperimentConfig::from_toml("[sim]\nbogus = 1").is_err());
        assert!(ExperimentConfig::from_toml("[ppo]\nclip_range = 2.0").is_err());
    }

    #[test]
    fn partial_override() {
        let cfg = ExperimentConfig::from_toml("[reward]\nsafety = 0.0\n[experiment]\neval_episodes = 3").unwrap();
        assert_eq!(cfg.reward.safety, 0.0);
        assert_eq!(cfg.reward.takeoff, RewardWeights::default().takeoff);
        assert_eq!(cfg.eval_seeds(), vec![1_000_000, 1_000_001, 1_000_002]);
    }
}
