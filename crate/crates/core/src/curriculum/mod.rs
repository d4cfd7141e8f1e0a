//! Two-phase training: a warm-up run on a small environment, then the final
//! environment with either the warm-up policy as a fixed sampler or the
//! warm-up parameters as the starting point.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::analysis::{ExactProbe, MonteCarloProbe};
use crate::envs::{okd_bang_per_buck_reference, sp_optimal_policy_dp, AnyEnv, EnvConfig, EnvKind};
use crate::lmdp::{evaluate_value_mc, Environment, McEstimate};
use crate::policy::{FeatureMap, LogLinearPolicy, Policy};
use crate::rng::{derive_seed, label};
use crate::trainer::{npg_train, LogRow, Phase, Probe, Sampler, TrainConfig, TrainLog, DEFAULT_REG_LAMBDA};
use crate::{Error, Result};

/// Warm-up target shrink factor for OKD, so `V/B` grows from warm-up to final.
pub const OKD_WARMUP_TARGET_SCALE: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingScheme {
    FixSampCurl,
    FixSampCurlReg,
    Direct,
    DirectReg,
    NaiveSamp,
    NaiveSampReg,
    Curl,
    CurlReg,
    Reference,
}

/// How the warm-up result is used in the final phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampMode {
    /// Fixed sampler, parameters restart from zero.
    PiS,
    /// Continue the warm-up parameters on-policy.
    PiT,
}

impl TrainingScheme {
    pub const ALL: [TrainingScheme; 9] = [
        TrainingScheme::FixSampCurl,
        TrainingScheme::FixSampCurlReg,
        TrainingScheme::Direct,
        TrainingScheme::DirectReg,
        TrainingScheme::NaiveSamp,
        TrainingScheme::NaiveSampReg,
        TrainingScheme::Curl,
        TrainingScheme::CurlReg,
        TrainingScheme::Reference,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrainingScheme::FixSampCurl => "fix_samp_curl",
            TrainingScheme::FixSampCurlReg => "fix_samp_curl_reg",
            TrainingScheme::Direct => "direct",
            TrainingScheme::DirectReg => "direct_reg",
            TrainingScheme::NaiveSamp => "naive_samp",
            TrainingScheme::NaiveSampReg => "naive_samp_reg",
            TrainingScheme::Curl => "curl",
            TrainingScheme::CurlReg => "curl_reg",
            TrainingScheme::Reference => "reference",
        }
    }

    pub fn is_regularized(self) -> bool {
        matches!(
            self,
            TrainingScheme::FixSampCurlReg
                | TrainingScheme::DirectReg
                | TrainingScheme::NaiveSampReg
                | TrainingScheme::CurlReg
        )
    }

    /// Warm-up usage, or `None` for single-phase schemes.
    pub fn samp_mode(self) -> Option<SampMode> {
        match self {
            TrainingScheme::FixSampCurl | TrainingScheme::FixSampCurlReg => Some(SampMode::PiS),
            TrainingScheme::Curl | TrainingScheme::CurlReg => Some(SampMode::PiT),
            _ => None,
        }
    }

    pub fn is_curriculum(self) -> bool {
        self.samp_mode().is_some()
    }
}

impl fmt::Display for TrainingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrainingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TrainingScheme::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scheme {s:?}")))
    }
}

/// Hyperparameter overrides for the warm-up phase.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseOverrides {
    pub episodes: Option<usize>,
    pub batch: Option<usize>,
    pub eta: Option<f64>,
}

fn yes() -> bool {
    true
}
fn default_eval() -> usize {
    2000
}
fn default_err() -> usize {
    200
}
fn default_reference() -> usize {
    20_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    /// Monte Carlo episodes per reward estimate when no exact model is used.
    #[serde(default = "default_eval")]
    pub eval_episodes: usize,
    /// Monte Carlo batches per fitting-error estimate.
    #[serde(default = "default_err")]
    pub err_episodes: usize,
    /// Monte Carlo batches per covariance estimate for kappa (0 = skip).
    #[serde(default)]
    pub kappa_batches: usize,
    /// Instances for the bang-per-buck reference search.
    #[serde(default = "default_reference")]
    pub reference_episodes: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            eval_episodes: default_eval(),
            err_episodes: default_err(),
            kappa_batches: 0,
            reference_episodes: default_reference(),
        }
    }
}

fn default_warmup_n() -> usize {
    10
}
fn default_reg() -> f64 {
    DEFAULT_REG_LAMBDA
}
fn default_scale() -> f64 {
    OKD_WARMUP_TARGET_SCALE
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurriculumConfig {
    pub final_env: EnvConfig,
    /// Explicit warm-up environment; generated from `final_env` when absent.
    #[serde(default)]
    pub warmup_env: Option<EnvConfig>,
    #[serde(default = "default_warmup_n")]
    pub warmup_n: usize,
    /// Defaults to the environment's polynomial features.
    #[serde(default)]
    pub features: Option<FeatureMap>,
    pub train: TrainConfig,
    #[serde(default)]
    pub warmup: PhaseOverrides,
    /// `lambda` of the regularized schemes.
    #[serde(default = "default_reg")]
    pub reg_lambda: f64,
    /// Give single-phase schemes extra final iterations so every scheme
    /// consumes the same number of samples.
    #[serde(default)]
    pub equalize_budget: bool,
    #[serde(default = "default_scale")]
    pub okd_warmup_target_scale: f64,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
}

impl CurriculumConfig {
    pub fn new(final_env: EnvConfig, train: TrainConfig) -> Self {
        Self {
            final_env,
            warmup_env: None,
            warmup_n: default_warmup_n(),
            features: None,
            train,
            warmup: PhaseOverrides::default(),
            reg_lambda: DEFAULT_REG_LAMBDA,
            equalize_budget: false,
            okd_warmup_target_scale: OKD_WARMUP_TARGET_SCALE,
            diagnostics: DiagnosticsConfig::default(),
        }
    }

    pub fn features(&self) -> FeatureMap {
        self.features
            .clone()
            .unwrap_or_else(|| self.final_env.default_features())
    }

    pub fn resolved_warmup_env(&self) -> Result<EnvConfig> {
        match &self.warmup_env {
            Some(e) => Ok(e.clone()),
            None => generate_curriculum_scaled(
                &self.final_env,
                self.warmup_n,
                self.train.seed,
                self.okd_warmup_target_scale,
            ),
        }
    }

    fn warmup_train(&self) -> TrainConfig {
        let mut t = self.train.clone();
        if let Some(e) = self.warmup.episodes {
            t.episodes = e;
        }
        if let Some(b) = self.warmup.batch {
            t.batch = b;
        }
        if let Some(eta) = self.warmup.eta {
            t.eta = eta;
        }
        t
    }
}

/// Warm-up environment for `final_env` with `warmup_n` steps.
pub fn generate_curriculum(final_env: &EnvConfig, warmup_n: usize, seed: u64) -> Result<EnvConfig> {
    generate_curriculum_scaled(final_env, warmup_n, seed, OKD_WARMUP_TARGET_SCALE)
}

/// As [`generate_curriculum`], with an explicit OKD target scale in `(0, 1)`.
///
/// SP keeps the classical flag and otherwise draws a fresh series from a
/// derived seed. OKD keeps `B/n` and multiplies `V/B` by `target_scale`.
pub fn generate_curriculum_scaled(
    final_env: &EnvConfig,
    warmup_n: usize,
    seed: u64,
    target_scale: f64,
) -> Result<EnvConfig> {
    if warmup_n == 0 || warmup_n >= final_env.n {
        return Err(Error::InvalidConfig(format!(
            "warm-up n = {warmup_n} must lie in [1, {})",
            final_env.n
        )));
    }
    let fresh = derive_seed(seed, &[label::CURRICULUM]);
    let ratio = warmup_n as f64 / final_env.n as f64;
    Ok(match final_env.env {
        EnvKind::Sp => EnvConfig {
            n: warmup_n,
            seed: fresh,
            ..final_env.clone()
        },
        EnvKind::Okd => {
            if !(target_scale > 0.0 && target_scale < 1.0) {
                return Err(Error::InvalidConfig(
                    "OKD warm-up target scale must lie in (0, 1)".into(),
                ));
            }
            EnvConfig {
                n: warmup_n,
                seed: fresh,
                budget: final_env.budget * ratio,
                target: final_env.target * ratio * target_scale,
                ..final_env.clone()
            }
        }
    })
}

/// The policy a scheme ends with.
#[derive(Clone)]
pub enum SchemePolicy {
    Trained(LogLinearPolicy),
    Reference(Arc<dyn Policy>),
}

impl SchemePolicy {
    pub fn as_policy(&self) -> &dyn Policy {
        match self {
            SchemePolicy::Trained(p) => p,
            SchemePolicy::Reference(p) => p.as_ref(),
        }
    }

    pub fn trained(&self) -> Option<&LogLinearPolicy> {
        match self {
            SchemePolicy::Trained(p) => Some(p),
            SchemePolicy::Reference(_) => None,
        }
    }
}

pub struct SchemeOutcome {
    pub scheme: TrainingScheme,
    pub policy: SchemePolicy,
    /// Warm-up policy, for curriculum schemes.
    pub warmup_policy: Option<LogLinearPolicy>,
    pub warmup_log: Option<TrainLog>,
    pub final_log: TrainLog,
    pub warmup_env: Option<EnvConfig>,
}

impl SchemeOutcome {
    /// Warm-up rows followed by final rows.
    pub fn combined_log(&self) -> TrainLog {
        let mut log = self.warmup_log.clone().unwrap_or_default();
        log.extend(self.final_log.clone());
        log
    }
}

/// Reference policy of an environment: the DP-optimal policy for SP, the
/// bang-per-buck search result for OKD.
pub fn reference_policy(env_config: &EnvConfig, env: &AnyEnv, episodes: usize, seed: u64) -> Result<Arc<dyn Policy>> {
    Ok(match env {
        AnyEnv::Sp(sp) => Arc::new(sp_optimal_policy_dp(sp.config()).policy()),
        AnyEnv::Okd(okd) => {
            let s = okd_bang_per_buck_reference(
                okd.config(),
                episodes.max(1),
                derive_seed(seed, &[label::REFERENCE, env_config.n as u64]),
            )?;
            Arc::new(s.policy)
        }
    })
}

fn build_probe(
    env: &AnyEnv,
    reference: Arc<dyn Policy>,
    diag: &DiagnosticsConfig,
    clip: f64,
    seed: u64,
) -> Result<Box<dyn Probe>> {
    Ok(match env {
        AnyEnv::Sp(sp) => Box::new(ExactProbe::new(sp.collapsed_tabular()?, reference)),
        AnyEnv::Okd(_) => {
            let mut p = MonteCarloProbe::new(env.clone(), reference, clip);
            p.eval_episodes = diag.eval_episodes;
            p.err_episodes = diag.err_episodes;
            p.kappa_batches = diag.kappa_batches;
            p.kappa_seed = derive_seed(seed, &[label::DIAGNOSTIC]);
            Box::new(p)
        }
    })
}

struct Phased<'a> {
    env_config: &'a EnvConfig,
    env: AnyEnv,
    probe: Option<Box<dyn Probe>>,
}

fn prepare<'a>(cfg: &CurriculumConfig, env_config: &'a EnvConfig, lambda_clip: f64) -> Result<Phased<'a>> {
    env_config.validate()?;
    let env = env_config.build()?;
    let features = cfg.features();
    if let Some(dim) = features.observation_dim() {
        if dim != env.observation_dim() {
            return Err(Error::DimensionMismatch {
                expected: env.observation_dim(),
                actual: dim,
            });
        }
    }
    let probe = if cfg.diagnostics.enabled {
        let reference = reference_policy(env_config, &env, cfg.diagnostics.reference_episodes, cfg.train.seed)?;
        Some(build_probe(
            &env,
            reference,
            &cfg.diagnostics,
            lambda_clip,
            cfg.train.seed,
        )?)
    } else {
        None
    };
    Ok(Phased { env_config, env, probe })
}

/// Runs one row of the scheme matrix.
pub fn run_scheme(scheme: TrainingScheme, cfg: &CurriculumConfig) -> Result<SchemeOutcome> {
    let features = cfg.features();
    let lambda = if scheme.is_regularized() { cfg.reg_lambda } else { 0.0 };
    let final_phase = prepare(cfg, &cfg.final_env, cfg.train.clip)?;
    let final_h = final_phase.env.horizon();

    if scheme == TrainingScheme::Reference {
        return run_reference(cfg, &final_phase, final_h);
    }

    // Single-phase schemes only need the warm-up size for budget matching.
    let warmup_env = if scheme.is_curriculum() || cfg.equalize_budget {
        Some(cfg.resolved_warmup_env()?)
    } else {
        None
    };
    let warm_cfg = TrainConfig {
        lambda,
        phase: Phase::Warmup,
        sampler: Sampler::OnPolicy,
        sample_offset: 0,
        label: scheme.name().into(),
        ..cfg.warmup_train()
    };
    let warm_samples = warmup_env
        .as_ref()
        .map_or(0, |e| warm_cfg.episodes as u64 * warm_cfg.samples_per_iteration(e.n));

    let mut final_cfg = TrainConfig {
        lambda,
        phase: Phase::Final,
        label: scheme.name().into(),
        ..cfg.train.clone()
    };

    let (warmup_policy, warmup_log, start) = match scheme.samp_mode() {
        Some(mode) => {
            let warmup_env = warmup_env.as_ref().expect("resolved for curriculum schemes");
            let warm = prepare(cfg, warmup_env, cfg.train.clip)?;
            let out = npg_train(
                &warm.env,
                LogLinearPolicy::zeros(features.clone()),
                &warm_cfg,
                warm.probe.as_deref(),
            )?;
            log::info!(
                "{scheme}: warm-up on {:?} n={} finished",
                warm.env_config.env,
                warm.env_config.n
            );
            final_cfg.sample_offset = warm_samples;
            let start = match mode {
                SampMode::PiS => {
                    final_cfg.sampler = Sampler::Fixed(Arc::new(out.policy.clone()));
                    LogLinearPolicy::zeros(features.clone())
                }
                SampMode::PiT => {
                    final_cfg.sampler = Sampler::OnPolicy;
                    out.policy.clone()
                }
            };
            (Some(out.policy), Some(out.log), start)
        }
        None => {
            final_cfg.sampler = match scheme {
                TrainingScheme::NaiveSamp | TrainingScheme::NaiveSampReg => Sampler::NaiveRandom,
                _ => Sampler::OnPolicy,
            };
            if cfg.equalize_budget {
                let per = final_cfg.samples_per_iteration(final_h);
                final_cfg.episodes += warm_samples.div_ceil(per) as usize;
            }
            (None, None, LogLinearPolicy::zeros(features.clone()))
        }
    };
    let out = npg_train(&final_phase.env, start, &final_cfg, final_phase.probe.as_deref())?;
    Ok(SchemeOutcome {
        scheme,
        policy: SchemePolicy::Trained(out.policy),
        warmup_policy,
        warmup_log,
        final_log: out.log,
        warmup_env: warmup_env.filter(|_| scheme.is_curriculum()),
    })
}

fn run_reference(cfg: &CurriculumConfig, phase: &Phased<'_>, horizon: usize) -> Result<SchemeOutcome> {
    let reference = reference_policy(
        phase.env_config,
        &phase.env,
        cfg.diagnostics.reference_episodes,
        cfg.train.seed,
    )?;
    let estimate = match &phase.env {
        AnyEnv::Sp(sp) => McEstimate {
            mean: sp.collapsed_tabular()?.value(reference.as_ref(), 0.0)?,
            ci95: 0.0,
        },
        env => evaluate_value_mc(
            env,
            reference.as_ref(),
            0.0,
            cfg.diagnostics.eval_episodes.max(1),
            derive_seed(cfg.train.seed, &[label::REFERENCE, label::EVAL]),
        )?,
    };
    let total = cfg.train.episodes as u64 * cfg.train.samples_per_iteration(horizon);
    let kind = match &phase.env {
        AnyEnv::Sp(_) => "dp",
        AnyEnv::Okd(_) => "bang_per_buck",
    };
    let mode = format!("reference:final/{kind}");
    let row = |iteration: usize, samples: u64| LogRow {
        iteration,
        samples_cumulative: samples,
        mode: mode.clone(),
        reward_mean: estimate.mean,
        reward_ci95: estimate.ci95,
        ln_kappa: f64::NAN,
        avg_err: f64::NAN,
        lambda: 0.0,
        wall_ms: 0,
    };
    Ok(SchemeOutcome {
        scheme: TrainingScheme::Reference,
        policy: SchemePolicy::Reference(reference),
        warmup_policy: None,
        warmup_log: None,
        final_log: TrainLog {
            rows: vec![row(0, 0), row(cfg.train.episodes, total)],
            checkpoints: Vec::new(),
            errors: Vec::new(),
        },
        warmup_env: None,
    })
}
