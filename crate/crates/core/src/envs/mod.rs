//! Secretary Problem and Online Knapsack (decision version) environments.

mod dist;
mod okd;
mod sp;

pub use dist::{okd_sample_distribution, GranularDistribution, ItemDistribution};
pub use okd::{
    okd_bang_per_buck_reference, BangPerBuckPolicy, BangPerBuckSearch, OkdConfig, OkdEnv, OkdEpisode,
    BPB_SEARCH_ITERATIONS,
};
pub use sp::{
    sp_generate_distribution, sp_optimal_policy_dp, SpConfig, SpDpSolution, SpEnv, SpEpisode, SpIndexPolicy,
    ThresholdPolicy,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::lmdp::{Action, Environment, Episode, TabularLmdp};
use crate::policy::FeatureMap;
use crate::rng::{derive_seed, label};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Sp,
    Okd,
}

/// Serialized environment description. Probability series and bin weights
/// are re-derived from `seed`, never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub env: EnvKind,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    /// SP only: use `P_i = 1/i`.
    #[serde(default)]
    pub classical: bool,
    /// OKD only: granularity of the value/size distributions; `<= 1` means
    /// `Unif[0, 1]`.
    #[serde(default)]
    pub gran: usize,
    #[serde(default)]
    pub budget: f64,
    #[serde(default)]
    pub target: f64,
}

impl EnvConfig {
    pub fn sp_classical(n: usize) -> Self {
        EnvConfig {
            env: EnvKind::Sp,
            n,
            seed: 0,
            classical: true,
            gran: 0,
            budget: 0.0,
            target: 0.0,
        }
    }

    pub fn sp_seeded(n: usize, seed: u64) -> Self {
        EnvConfig {
            classical: false,
            seed,
            ..Self::sp_classical(n)
        }
    }

    pub fn okd(n: usize, budget: f64, target: f64, gran: usize, seed: u64) -> Self {
        EnvConfig {
            env: EnvKind::Okd,
            n,
            seed,
            classical: false,
            gran,
            budget,
            target,
        }
    }

    pub fn build(&self) -> Result<AnyEnv> {
        match self.env {
            EnvKind::Sp => {
                let config = if self.classical {
                    SpConfig::classical(self.n)?
                } else {
                    sp_generate_distribution(self.n, self.seed)?
                };
                Ok(AnyEnv::Sp(SpEnv::new(config)))
            }
            EnvKind::Okd => {
                let dist = |which: u64| {
                    if self.gran <= 1 {
                        Ok(ItemDistribution::Uniform)
                    } else {
                        okd_sample_distribution(self.gran, derive_seed(self.seed, &[label::ENV_DIST, which]))
                            .map(ItemDistribution::Granular)
                    }
                };
                let config = OkdConfig::new(self.n, self.budget, self.target, dist(0)?, dist(1)?, self.seed)?;
                Ok(AnyEnv::Okd(OkdEnv::new(config)))
            }
        }
    }

    /// Default feature map: degree 4 for SP (d = 8), degree 3 for OKD (d = 243).
    pub fn default_features(&self) -> FeatureMap {
        match self.env {
            EnvKind::Sp => FeatureMap::SpPoly { d0: 4 },
            EnvKind::Okd => FeatureMap::OkdPoly { d0: 3 },
        }
    }

    pub fn features_with_degree(&self, d0: Option<usize>) -> FeatureMap {
        match (self.env, d0) {
            (EnvKind::Sp, Some(d0)) => FeatureMap::SpPoly { d0 },
            (EnvKind::Okd, Some(d0)) => FeatureMap::OkdPoly { d0 },
            _ => self.default_features(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be >= 1".into()));
        }
        if self.env == EnvKind::Okd && !(self.budget > 0.0 && self.target > 0.0) {
            return Err(Error::InvalidConfig("OKD needs budget > 0 and target > 0".into()));
        }
        Ok(())
    }
}

/// Either environment, for configuration-driven code.
#[derive(Debug, Clone)]
pub enum AnyEnv {
    Sp(SpEnv),
    Okd(OkdEnv),
}

#[derive(Clone)]
pub enum AnyEpisode<'e> {
    Sp(SpEpisode<'e>),
    Okd(OkdEpisode<'e>),
}

impl Episode for AnyEpisode<'_> {
    fn observation(&self) -> Vec<f64> {
        match self {
            AnyEpisode::Sp(e) => e.observation(),
            AnyEpisode::Okd(e) => e.observation(),
        }
    }

    fn is_terminal(&self) -> bool {
        match self {
            AnyEpisode::Sp(e) => e.is_terminal(),
            AnyEpisode::Okd(e) => e.is_terminal(),
        }
    }

    fn step(&mut self, action: Action) -> f64 {
        match self {
            AnyEpisode::Sp(e) => e.step(action),
            AnyEpisode::Okd(e) => e.step(action),
        }
    }
}

impl Environment for AnyEnv {
    type Episode<'e> = AnyEpisode<'e>;

    fn horizon(&self) -> usize {
        match self {
            AnyEnv::Sp(e) => e.horizon(),
            AnyEnv::Okd(e) => e.horizon(),
        }
    }

    fn observation_dim(&self) -> usize {
        match self {
            AnyEnv::Sp(e) => e.observation_dim(),
            AnyEnv::Okd(e) => e.observation_dim(),
        }
    }

    fn reset<'e, R: Rng + ?Sized>(&'e self, rng: &mut R) -> AnyEpisode<'e> {
        match self {
            AnyEnv::Sp(e) => AnyEpisode::Sp(e.reset(rng)),
            AnyEnv::Okd(e) => AnyEpisode::Okd(e.reset(rng)),
        }
    }

    fn tabular(&self, cap: usize) -> Result<TabularLmdp> {
        match self {
            AnyEnv::Sp(e) => e.tabular(cap),
            AnyEnv::Okd(e) => e.tabular(cap),
        }
    }
}
