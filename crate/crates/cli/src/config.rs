use std::collections::HashSet;
use std::path::{Path, PathBuf};

use clinagent_core::agentclinic::DEFAULT_MAX_TURNS;
use clinagent_core::backend::{BackendSpec, RouteConfig};
use clinagent_core::evalkit::{DatasetKind, Pipeline};
use clinagent_core::medagents::DEFAULT_MAX_ITERS;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("config field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    pub kind: DatasetKind,
    /// Name used in reports and transcript paths; defaults to the file stem.
    #[serde(default)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    #[serde(default)]
    pub sample: u64,
    #[serde(default)]
    pub fold: u64,
}

/// Which clock entry sessions use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockSetting {
    /// Simulated when every backend is scripted, wall clock otherwise.
    #[default]
    Auto,
    Real,
    Simulated,
}

fn default_k_folds() -> usize {
    3
}

fn default_max_iters() -> usize {
    DEFAULT_MAX_ITERS
}

fn default_max_turns() -> usize {
    DEFAULT_MAX_TURNS
}

fn default_workers() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// One self-contained run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub pipeline: Pipeline,
    pub dataset: DatasetConfig,
    pub backends: Vec<BackendSpec>,
    pub route: RouteConfig,
    /// Entries to sample; all entries when absent.
    #[serde(default)]
    pub n_sample: Option<usize>,
    #[serde(default = "default_k_folds")]
    pub k_folds: usize,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_max_turns")]
    pub max_turns: usize,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub clock: ClockSetting,
}

/// Command-line overrides; everything else comes from the config file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Overrides {
    pub sample_seed: Option<u64>,
    pub fold_seed: Option<u64>,
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Reads a config file. Relative dataset and output paths are resolved
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<(Self, String), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::from_toml(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if config.dataset.path.is_relative() {
            config.dataset.path = base.join(&config.dataset.path);
        }
        if config.output_dir.is_relative() {
            config.output_dir = base.join(&config.output_dir);
        }
        Ok((config, text))
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(seed) = overrides.sample_seed {
            self.seeds.sample = seed;
        }
        if let Some(seed) = overrides.fold_seed {
            self.seeds.fold = seed;
        }
        if let Some(workers) = overrides.workers {
            self.workers = workers;
        }
        if let Some(dir) = &overrides.output_dir {
            self.output_dir = dir.clone();
        }
    }

    pub fn dataset_name(&self) -> String {
        self.dataset.name.clone().unwrap_or_else(|| {
            self.dataset
                .path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into())
        })
    }

    pub fn all_scripted(&self) -> bool {
        self.backends.iter().all(BackendSpec::is_scripted)
    }

    /// Checks everything that can be checked without reading the dataset.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.pipeline.dataset_kind() != self.dataset.kind {
            return Err(invalid(
                "dataset.kind",
                format!("pipeline {} needs a {} dataset", self.pipeline, self.pipeline.dataset_kind()),
            ));
        }
        if self.backends.is_empty() {
            return Err(invalid("backends", "at least one backend is required"));
        }
        let mut names = HashSet::new();
        for (i, backend) in self.backends.iter().enumerate() {
            backend
                .validate()
                .map_err(|e| invalid(format!("backends[{i}]"), e.to_string()))?;
            if !names.insert(backend.name.as_str()) {
                return Err(invalid(
                    format!("backends[{i}].name"),
                    format!("backend `{}` defined twice", backend.name),
                ));
            }
        }
        for (key, backend) in self.route.references() {
            if !names.contains(backend) {
                let field = if key == "default" {
                    "route.default_backend".to_string()
                } else {
                    format!("route.overrides.{key}")
                };
                return Err(invalid(field, format!("route key `{key}` refers to undefined backend `{backend}`")));
            }
        }
        if self.k_folds == 0 {
            return Err(invalid("k_folds", "must be at least 1"));
        }
        if let Some(n) = self.n_sample {
            if n < self.k_folds {
                return Err(invalid("n_sample", format!("{n} is smaller than k_folds = {}", self.k_folds)));
            }
        }
        if self.workers == 0 {
            return Err(invalid("workers", "must be at least 1"));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters", "must be at least 1"));
        }
        if self.max_turns == 0 {
            return Err(invalid("max_turns", "must be at least 1"));
        }
        Ok(())
    }
}
