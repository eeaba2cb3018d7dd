//! Evaluation manifests: which prediction files to score and how.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::io::{resolve, PredictionFormat};
use crate::analysis::DEFAULT_RESAMPLES;
use crate::error::{Error, Result};
use crate::metrics::EceConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub model_name: String,
    pub dataset_name: String,
    /// Relative paths resolve against the manifest's directory.
    pub path: PathBuf,
    pub format: PredictionFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclusion_id_file: Option<PathBuf>,
    /// Grouping key for power-law fits; defaults to `model_name`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
}

impl ManifestEntry {
    pub fn family_key(&self) -> &str {
        self.family.as_deref().unwrap_or(&self.model_name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum TemperaturePolicy {
    /// Report unscaled metrics only; scaled equals unscaled.
    None,
    /// Fit on the held-out split, evaluate on the rest.
    FitOnSplit,
    Fixed { temperature: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub ece: EceConfig,
    /// Fraction of each (post-exclusion) set reserved for temperature fitting.
    pub split_fraction: f64,
    pub seed: u64,
    pub class_subset: Option<Vec<usize>>,
    pub temperature_policy: TemperaturePolicy,
    pub reliability_hist_bins: usize,
    pub bootstrap_resamples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ece: EceConfig::default(),
            split_fraction: 0.2,
            seed: 0,
            class_subset: None,
            temperature_policy: TemperaturePolicy::FitOnSplit,
            reliability_hist_bins: 20,
            bootstrap_resamples: DEFAULT_RESAMPLES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    #[serde(default)]
    pub config: EvalConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>, config: EvalConfig, base_dir: impl Into<PathBuf>) -> Self {
        Self {
            entries,
            config,
            base_dir: base_dir.into(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, base)
    }

    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut m: Manifest = serde_json::from_str(text).map_err(|e| Error::InvalidManifest(e.to_string()))?;
        m.base_dir = base_dir.into();
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::InvalidManifest("no entries".into()));
        }
        let c = &self.config;
        if !(c.split_fraction > 0.0 && c.split_fraction < 1.0) {
            return Err(Error::InvalidManifest(format!("split_fraction {} is outside (0, 1)", c.split_fraction)));
        }
        c.ece.validate().map_err(|e| Error::InvalidManifest(e.to_string()))?;
        if c.reliability_hist_bins == 0 {
            return Err(Error::InvalidManifest("reliability_hist_bins must be positive".into()));
        }
        if c.bootstrap_resamples == 0 {
            return Err(Error::InvalidManifest("bootstrap_resamples must be positive".into()));
        }
        if let TemperaturePolicy::Fixed { temperature } = c.temperature_policy {
            if !(temperature > 0.0 && temperature.is_finite()) {
                return Err(Error::InvalidManifest(format!("fixed temperature {temperature} is not positive")));
            }
        }
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert((e.model_name.as_str(), e.dataset_name.as_str())) {
                return Err(Error::InvalidManifest(format!(
                    "duplicate entry for model `{}` on dataset `{}`",
                    e.model_name, e.dataset_name
                )));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        resolve(&self.base_dir, path)
    }

    /// Copy with every path resolved, so it can be re-run from any directory.
    pub fn resolved(&self) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|e| ManifestEntry {
                path: self.resolve(&e.path),
                exclusion_id_file: e.exclusion_id_file.as_ref().map(|p| self.resolve(p)),
                ..e.clone()
            })
            .collect();
        Self {
            entries,
            config: self.config.clone(),
            base_dir: PathBuf::new(),
        }
    }
}
