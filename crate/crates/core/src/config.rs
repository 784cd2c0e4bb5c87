//! Run configuration: a versioned TOML file.
//!
//! ```toml
//! version = 1
//!
//! [train]
//! num_trees = 500
//! learning_rate = 0.05
//!
//! [split]
//! seed = 7
//!
//! [pipeline]
//! records = "tweets.jsonl"
//! compliance = "deletions.jsonl"
//! work_dir = "run"
//! ```
//!
//! Every section and key is optional except `version`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiments::SplitSpec;
use crate::gbrt::TrainConfig;
use crate::sha256_hex;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config syntax: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported config version {0} (expected {CONFIG_VERSION})")]
    Version(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Newline-delimited tweet records to ingest.
    pub records: Option<PathBuf>,
    /// Newline-delimited deletion requests; the comply stage is a no-op
    /// without it.
    pub compliance: Option<PathBuf>,
    pub work_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            records: None,
            compliance: None,
            work_dir: PathBuf::from("run"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub pipeline: PipelineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: CONFIG_VERSION,
            train: TrainConfig::default(),
            split: SplitSpec::default(),
            pipeline: PipelineConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        if cfg.version != CONFIG_VERSION {
            return Err(ConfigError::Version(cfg.version));
        }
        Ok(cfg)
    }

    /// Reads a config file. Relative pipeline paths are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text)?;
        if let Some(dir) = path.parent() {
            let rebase = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            };
            if let Some(p) = cfg.pipeline.records.as_mut() {
                rebase(p);
            }
            if let Some(p) = cfg.pipeline.compliance.as_mut() {
                rebase(p);
            }
            rebase(&mut cfg.pipeline.work_dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies a global seed to every seeded component.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train.seed = seed;
        self.split.seed = seed;
        self
    }

    /// Hash of the settings that affect results (not the file paths).
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(&(self.version, &self.train, &self.split)).expect("config serializes");
        sha256_hex(&canonical)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_uses_defaults() {
        let cfg = RunConfig::parse("version = 1\n").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn sections_override() {
        let cfg = RunConfig::parse("version = 1\n[train]\nnum_trees = 7\ngoss_enabled = true\n[split]\nseed = 3\n").unwrap();
        assert_eq!(cfg.train.num_trees, 7);
        assert!(cfg.train.goss_enabled);
        assert_eq!(cfg.split.seed, 3);
        assert_eq!(cfg.train.learning_rate, 0.05);
    }

    #[test]
    fn rejects_unknown_keys_and_versions() {
        assert!(RunConfig::parse("version = 1\n[train]\ntrees = 7\n").is_err());
        assert!(matches!(RunConfig::parse("version = 2\n"), Err(ConfigError::Version(2))));
        assert!(RunConfig::parse("[train]\n").is_err());
    }

    #[test]
    fn round_trip_and_hash() {
        let cfg = RunConfig::default().with_seed(9);
        let back = RunConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_ne!(RunConfig::default().hash(), cfg.hash());
        let mut moved = cfg.clone();
        moved.pipeline.work_dir = "elsewhere".into();
        assert_eq!(moved.hash(), cfg.hash());
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "version = 1\n[pipeline]\nrecords = \"in.jsonl\"\n").unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.pipeline.records.unwrap(), dir.path().join("in.jsonl"));
        assert_eq!(cfg.pipeline.work_dir, dir.path().join("run"));
    }
}
