use std::path::Path;

use anyhow::{Context, Result};
use lmdp_npg::{EnvConfig, FeatureMap, LogLinearPolicy};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub iteration: usize,
    #[serde(default)]
    pub scheme: Option<String>,
    #[serde(default)]
    pub phase: Option<String>,
}

/// Saved parameters with enough context to rebuild the policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointFile {
    pub env: EnvConfig,
    pub feature: FeatureMap,
    pub theta: Vec<f64>,
    pub meta: CheckpointMeta,
}

impl CheckpointFile {
    pub fn policy(&self) -> Result<LogLinearPolicy> {
        Ok(LogLinearPolicy::new(self.theta.clone(), self.feature.clone())?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}
