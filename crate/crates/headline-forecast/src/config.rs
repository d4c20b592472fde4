//! The run configuration file: one JSON document wiring data paths, corpus
//! filtering, embedding providers, feature options and the grid.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::runner::GridConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfigFile {
    pub paths: PathsConfig,
    pub market: MarketConfig,
    #[serde(default)]
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub providers: Vec<ProviderConfig>,
    #[serde(default)]
    pub fetch: FetchOptions,
    #[serde(default)]
    pub features: FeatureOptions,
    #[serde(default)]
    pub grid: GridConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathsConfig {
    pub headlines: PathBuf,
    pub cache_dir: PathBuf,
    pub results_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarketFileConfig {
    pub name: String,
    pub path: PathBuf,
    /// Columns the file must provide (beyond the leading date column).
    pub schema: Vec<String>,
    /// Columns selected into the frame.
    pub select: Vec<String>,
    #[serde(default)]
    pub normalize: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarketConfig {
    pub anchor: MarketFileConfig,
    /// Anchor column predicted by the models (kept raw as the target).
    pub target_column: String,
    #[serde(default)]
    pub others: Vec<MarketFileConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusConfig {
    #[serde(default = "default_whitelist")]
    pub whitelist: Vec<String>,
    /// Seed for the per-day headline selection stream.
    #[serde(default)]
    pub selection_seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            whitelist: default_whitelist(),
            selection_seed: 0,
        }
    }
}

fn default_whitelist() -> Vec<String> {
    ["finance", "business", "markets", "economy"]
        .map(String::from)
        .to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Offline,
    Remote,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub model_id: String,
    pub kind: ProviderKind,
    pub dim: usize,
    /// Offline embedder seed.
    #[serde(default)]
    pub seed: u64,
    /// Remote endpoint URL.
    #[serde(default)]
    pub endpoint: Option<String>,
    /// Environment variable holding the bearer token.
    #[serde(default = "default_auth_env")]
    pub auth_env: String,
    /// Texts per remote request.
    #[serde(default = "one")]
    pub request_batch: usize,
}

fn default_auth_env() -> String {
    "EMBED_API_TOKEN".into()
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FetchOptions {
    pub workers: usize,
    pub writer_count: usize,
    pub flush_threshold: usize,
    pub retry_limit: usize,
    pub backoff_ms: u64,
}

impl Default for FetchOptions {
    fn default() -> Self {
        FetchOptions {
            workers: 500,
            writer_count: 4,
            flush_threshold: 100,
            retry_limit: 3,
            backoff_ms: 250,
        }
    }
}

impl FetchOptions {
    pub fn to_fetch_config(&self) -> crate::embed::FetchConfig {
        crate::embed::FetchConfig {
            workers: self.workers,
            writer_count: self.writer_count,
            flush_threshold: self.flush_threshold,
            retry_limit: self.retry_limit,
            backoff: std::time::Duration::from_millis(self.backoff_ms),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureOptions {
    /// Absolute Pearson correlation above which a later column is dropped.
    pub prune_threshold: f64,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        FeatureOptions {
            prune_threshold: 0.95,
        }
    }
}

impl RunConfigFile {
    pub fn load(path: &Path) -> Result<RunConfigFile> {
        let body = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let config: RunConfigFile = serde_json::from_str(&body).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Check referenced paths exist and the sections agree with each other.
    pub fn validate(&self) -> Result<()> {
        for (what, path) in [("headlines file", &self.paths.headlines)]
            .into_iter()
            .chain(std::iter::once(("anchor market file", &self.market.anchor.path)))
            .chain(self.market.others.iter().map(|m| ("market file", &m.path)))
        {
            if !path.exists() {
                return Err(Error::Config(format!(
                    "{what} does not exist: {}",
                    path.display()
                )));
            }
        }
        if self.corpus.whitelist.is_empty() {
            return Err(Error::Config("corpus whitelist is empty".into()));
        }
        if !self.market.anchor.schema.contains(&self.market.target_column) {
            return Err(Error::Config(format!(
                "target column {} not in anchor schema",
                self.market.target_column
            )));
        }
        for m in std::iter::once(&self.market.anchor).chain(&self.market.others) {
            for col in &m.select {
                if !m.schema.contains(col) {
                    return Err(Error::Config(format!(
                        "selected column {col} not in schema of {}",
                        m.name
                    )));
                }
            }
        }
        let provided: BTreeSet<&str> = self.providers.iter().map(|p| p.model_id.as_str()).collect();
        for axis in &self.grid.embedding_axes {
            if !provided.contains(axis.model_id.as_str()) {
                return Err(Error::Config(format!(
                    "grid references embedding model {:?} but no provider defines it",
                    axis.model_id
                )));
            }
        }
        for p in &self.providers {
            if p.dim < 2 {
                return Err(Error::Config(format!(
                    "provider {} dim must be >= 2",
                    p.model_id
                )));
            }
            if p.kind == ProviderKind::Remote && p.endpoint.is_none() {
                return Err(Error::Config(format!(
                    "remote provider {} needs an endpoint",
                    p.model_id
                )));
            }
        }
        self.grid.validate()?;
        if !(0.0..=1.0).contains(&self.features.prune_threshold) {
            return Err(Error::Config("prune threshold outside [0, 1]".into()));
        }
        Ok(())
    }

    pub fn whitelist_set(&self) -> BTreeSet<String> {
        self.corpus.whitelist.iter().cloned().collect()
    }

    pub fn frame_path(&self) -> PathBuf {
        self.paths.cache_dir.join("frame.json")
    }

    pub fn prune_report_path(&self) -> PathBuf {
        self.paths.cache_dir.join("prune_report.json")
    }

    pub fn cache_path(&self) -> PathBuf {
        self.paths.cache_dir.join("embeddings.jsonl")
    }
}
