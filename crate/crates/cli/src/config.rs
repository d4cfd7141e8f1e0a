use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lmdp_npg::curriculum::{CurriculumConfig, DiagnosticsConfig, PhaseOverrides, OKD_WARMUP_TARGET_SCALE};
use lmdp_npg::trainer::DEFAULT_REG_LAMBDA;
use lmdp_npg::{EnvConfig, FeatureMap, TrainConfig, TrainingScheme};
use serde::{Deserialize, Serialize};

fn default_warmup_n() -> usize {
    10
}
fn default_reg() -> f64 {
    DEFAULT_REG_LAMBDA
}
fn default_scale() -> f64 {
    OKD_WARMUP_TARGET_SCALE
}

/// Warm-up settings shared by the curriculum schemes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumBlock {
    #[serde(default = "default_warmup_n")]
    pub warmup_n: usize,
    #[serde(default)]
    pub warmup_env: Option<EnvConfig>,
    #[serde(default)]
    pub warmup: PhaseOverrides,
    #[serde(default = "default_reg")]
    pub reg_lambda: f64,
    #[serde(default)]
    pub equalize_budget: bool,
    #[serde(default = "default_scale")]
    pub okd_warmup_target_scale: f64,
}

impl Default for CurriculumBlock {
    fn default() -> Self {
        Self {
            warmup_n: default_warmup_n(),
            warmup_env: None,
            warmup: PhaseOverrides::default(),
            reg_lambda: default_reg(),
            equalize_budget: false,
            okd_warmup_target_scale: default_scale(),
        }
    }
}

/// One experiment: an environment, the schemes to run on it, and the shared
/// hyperparameters. The environment block's seed fixes the instance
/// distribution; `seed` drives every training and evaluation stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    #[serde(default)]
    pub schemes: Vec<TrainingScheme>,
    pub train: TrainConfig,
    #[serde(default)]
    pub curriculum: CurriculumBlock,
    #[serde(default)]
    pub features: Option<FeatureMap>,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.train.validate()?;
        if let Some(w) = &self.curriculum.warmup_env {
            w.validate()?;
            if w.env != self.env.env {
                bail!("warm-up and final environments must be the same problem");
            }
        }
        let needs_warmup = self.schemes.iter().any(|s| s.is_curriculum());
        if needs_warmup && self.curriculum.warmup_env.is_none() && self.curriculum.warmup_n >= self.env.n {
            bail!(
                "curriculum warm-up n = {} must be smaller than the final n = {}",
                self.curriculum.warmup_n,
                self.env.n
            );
        }
        Ok(())
    }

    pub fn curriculum_config(&self) -> CurriculumConfig {
        let mut train = self.train.clone();
        train.seed = self.seed;
        CurriculumConfig {
            final_env: self.env.clone(),
            warmup_env: self.curriculum.warmup_env.clone(),
            warmup_n: self.curriculum.warmup_n,
            features: self.features.clone(),
            train,
            warmup: self.curriculum.warmup.clone(),
            reg_lambda: self.curriculum.reg_lambda,
            equalize_budget: self.curriculum.equalize_budget,
            okd_warmup_target_scale: self.curriculum.okd_warmup_target_scale,
            diagnostics: self.diagnostics.clone(),
        }
    }
}
