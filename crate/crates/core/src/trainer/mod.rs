//! Sample-based natural policy gradient for log-linear policies.
//!
//! Each iteration draws a `batch x H` grid of advantage samples, forms the
//! unnormalized Fisher and gradient sums, solves the ball-constrained
//! compatible-loss quadratic, and steps `theta <- theta + eta g`.

mod estimate;
mod sampler;
mod solver;

pub use estimate::{estimate_fisher_and_gradient, FisherAndGradientEstimate};
pub use sampler::{advantage_bound, clipped_entropy_gap, collect_samples, sample_advantage, AdvantageSample};
pub use solver::{solve_constrained_quadratic, SolverOptions};

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::DecayedAverage;
use crate::lmdp::{evaluate_value_mc, Environment, McEstimate};
use crate::policy::{LogLinearPolicy, NaiveRandomPolicy, Policy};
use crate::rng::{derive_seed, label};
use crate::{Error, Result};

/// Default entropy clip `U = ln 2 + 5`.
pub const DEFAULT_CLIP: f64 = std::f64::consts::LN_2 + 5.0;
pub const DEFAULT_BALL_RADIUS: f64 = 50.0;
pub const DEFAULT_REG_LAMBDA: f64 = 0.01;

/// Where the state-action pairs of the compatible loss come from.
#[derive(Clone, Default)]
pub enum Sampler {
    /// `d^{theta_t}`: roll and act with the current policy.
    #[default]
    OnPolicy,
    /// Grafted distribution of the policy that accepts w.p. 1/2 everywhere.
    NaiveRandom,
    /// Grafted distribution of a fixed policy: roll it, then act uniformly.
    Fixed(Arc<dyn Policy>),
}

impl Sampler {
    pub fn name(&self) -> &'static str {
        match self {
            Sampler::OnPolicy => "on_policy",
            Sampler::NaiveRandom => "naive_random",
            Sampler::Fixed(_) => "fixed",
        }
    }

    pub fn is_grafted(&self) -> bool {
        !matches!(self, Sampler::OnPolicy)
    }

    /// Roll-in policy, given the current one.
    pub fn roll_in<'a>(&'a self, current: &'a dyn Policy) -> &'a dyn Policy {
        match self {
            Sampler::OnPolicy => current,
            Sampler::NaiveRandom => &NaiveRandomPolicy,
            Sampler::Fixed(p) => p.as_ref(),
        }
    }
}

impl fmt::Debug for Sampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sampler::Fixed(p) => write!(f, "Fixed({})", p.describe()),
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Warmup,
    #[default]
    Final,
}

impl Phase {
    pub fn label(self) -> u64 {
        match self {
            Phase::Warmup => label::WARMUP,
            Phase::Final => label::FINAL,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::Warmup => "warmup",
            Phase::Final => "final",
        }
    }
}

fn default_clip() -> f64 {
    DEFAULT_CLIP
}
fn default_radius() -> f64 {
    DEFAULT_BALL_RADIUS
}
fn default_log_every() -> usize {
    10
}
fn default_eval_episodes() -> usize {
    2000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub eta: f64,
    /// Number of iterations `T`.
    pub episodes: usize,
    /// Trajectories per step index per iteration (`N`).
    pub batch: usize,
    #[serde(default)]
    pub lambda: f64,
    /// Entropy clip `U`.
    #[serde(default = "default_clip")]
    pub clip: f64,
    /// Radius `G` of the parameter-step ball.
    #[serde(default = "default_radius")]
    pub ball_radius: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    /// Episodes per reward estimate in log rows (0 disables the estimate).
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    /// Keep `theta` every K iterations (0 = only the final one).
    #[serde(default)]
    pub checkpoint_every: usize,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(skip)]
    pub sampler: Sampler,
    #[serde(default)]
    pub phase: Phase,
    /// Samples consumed before this run, for cumulative bookkeeping.
    #[serde(default)]
    pub sample_offset: u64,
    /// Prefix for the `mode` column, usually the scheme name.
    #[serde(default)]
    pub label: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta: 0.2,
            episodes: 100,
            batch: 100,
            lambda: 0.0,
            clip: DEFAULT_CLIP,
            ball_radius: DEFAULT_BALL_RADIUS,
            seed: 0,
            log_every: default_log_every(),
            eval_episodes: default_eval_episodes(),
            checkpoint_every: 0,
            solver: SolverOptions::default(),
            sampler: Sampler::OnPolicy,
            phase: Phase::Final,
            sample_offset: 0,
            label: String::new(),
        }
    }
}

impl TrainConfig {
    /// `eta = 0` is allowed and freezes the parameters.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad("eta must be finite and >= 0");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be >= 0");
        }
        if self.lambda > 0.0 && !(self.clip >= std::f64::consts::LN_2 - 1.0) {
            return bad("clip U must be >= ln|A| - 1 when lambda > 0");
        }
        if !(self.ball_radius > 0.0) {
            return bad("ball radius G must be > 0");
        }
        if self.batch == 0 {
            return bad("batch must be >= 1");
        }
        if self.eta * self.lambda >= 1.0 {
            return bad("eta * lambda must be < 1");
        }
        Ok(())
    }

    pub fn mode(&self) -> String {
        let base = format!("{}/{}", self.phase.name(), self.sampler.name());
        if self.label.is_empty() {
            base
        } else {
            format!("{}:{base}", self.label)
        }
    }

    /// Samples per iteration: `batch x horizon`.
    pub fn samples_per_iteration(&self, horizon: usize) -> u64 {
        (self.batch * horizon) as u64
    }
}

/// Diagnostics evaluated at logged iterations.
pub trait Probe: Send + Sync {
    fn reward(&self, policy: &LogLinearPolicy, lambda: f64, seed: u64) -> Result<McEstimate>;
    /// `kappa(theta)` for the given sampler; `None` when not measured.
    fn kappa(&self, policy: &LogLinearPolicy, sampler: &Sampler) -> Result<Option<f64>>;
    /// `err_t` for the current policy and its step; `None` when not measured.
    fn fitting_error(&self, policy: &LogLinearPolicy, step: &[f64], lambda: f64, seed: u64) -> Result<Option<f64>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: usize,
    pub samples_cumulative: u64,
    pub mode: String,
    pub reward_mean: f64,
    pub reward_ci95: f64,
    /// NaN when not measured, `+inf` when the sampler misses reference mass.
    pub ln_kappa: f64,
    pub avg_err: f64,
    pub lambda: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub iteration: usize,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
    pub checkpoints: Vec<Checkpoint>,
    /// Raw `err_t` values at logged iterations.
    pub errors: Vec<(usize, f64)>,
}

impl TrainLog {
    pub fn last_row(&self) -> Option<&LogRow> {
        self.rows.last()
    }

    pub fn extend(&mut self, other: TrainLog) {
        self.rows.extend(other.rows);
        self.checkpoints.extend(other.checkpoints);
        self.errors.extend(other.errors);
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: LogLinearPolicy,
    pub log: TrainLog,
}

/// Runs `config.episodes` NPG iterations from `policy0`.
///
/// Deterministic given the config: sample cells, evaluation episodes and
/// diagnostics all draw from streams derived from `config.seed`.
pub fn npg_train<E: Environment>(
    env: &E,
    policy0: LogLinearPolicy,
    config: &TrainConfig,
    probe: Option<&dyn Probe>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let start = Instant::now();
    let horizon = env.horizon();
    let per_iter = (horizon * config.batch) as u64;
    let phase = config.phase.label();
    let unif = config.sampler.is_grafted();
    let mut avg = DecayedAverage::new(config.eta, config.lambda)?;
    let mut log = TrainLog::default();
    let mut policy = policy0;
    let log_every = config.log_every.max(1);

    let mut write_row = |t: usize, policy: &LogLinearPolicy, err: Option<f64>, log: &mut TrainLog| -> Result<()> {
        if let Some(e) = err {
            avg.push(e);
            log.errors.push((t, e));
        }
        let eval_seed = derive_seed(config.seed, &[phase, label::EVAL, t as u64]);
        let reward = match probe {
            Some(p) => Some(p.reward(policy, config.lambda, eval_seed)?),
            None if config.eval_episodes > 0 => Some(evaluate_value_mc(
                env,
                policy,
                config.lambda,
                config.eval_episodes,
                eval_seed,
            )?),
            None => None,
        };
        let kappa = match probe {
            Some(p) => p.kappa(policy, &config.sampler)?,
            None => None,
        };
        let row = LogRow {
            iteration: t,
            samples_cumulative: config.sample_offset + t as u64 * per_iter,
            mode: config.mode(),
            reward_mean: reward.map_or(f64::NAN, |r| r.mean),
            reward_ci95: reward.map_or(f64::NAN, |r| r.ci95),
            ln_kappa: kappa.map_or(f64::NAN, f64::ln),
            avg_err: avg.value().unwrap_or(f64::NAN),
            lambda: config.lambda,
            wall_ms: start.elapsed().as_millis() as u64,
        };
        log::info!(
            "[{}] t={} samples={} reward={:.4}±{:.4} ln_kappa={:.3} avg_err={:.4}",
            row.mode,
            row.iteration,
            row.samples_cumulative,
            row.reward_mean,
            row.reward_ci95,
            row.ln_kappa,
            row.avg_err
        );
        log.rows.push(row);
        Ok(())
    };

    for t in 0..config.episodes {
        let roll_in = config.sampler.roll_in(&policy);
        let samples = collect_samples(
            env,
            roll_in,
            unif,
            &policy,
            config.batch,
            config.lambda,
            config.clip,
            config.seed,
            &[phase, t as u64],
        )?;
        let est = estimate_fisher_and_gradient(&samples, &policy)?;
        let step = solve_constrained_quadratic(
            &est.f_hat,
            &est.nabla_hat,
            config.ball_radius,
            config.solver.tol,
            config.solver.max_iters,
        )?;
        assert!(step.norm() <= config.ball_radius * (1.0 + 1e-9), "solver left the ball");
        if t % log_every == 0 {
            let err = match probe {
                Some(p) => p.fitting_error(
                    &policy,
                    step.as_slice(),
                    config.lambda,
                    derive_seed(config.seed, &[phase, label::DIAGNOSTIC, t as u64]),
                )?,
                None => None,
            };
            write_row(t, &policy, err, &mut log)?;
        }
        let next = policy.stepped(config.eta, step.as_slice())?;
        if let Some(bad) = next.theta().iter().find(|x| !x.is_finite()) {
            return Err(Error::Diverged {
                iteration: t,
                reason: format!("theta component became {bad}"),
            });
        }
        policy = next;
        if config.checkpoint_every > 0 && (t + 1) % config.checkpoint_every == 0 {
            log.checkpoints.push(Checkpoint {
                iteration: t + 1,
                theta: policy.theta().to_vec(),
            });
        }
    }
    write_row(config.episodes, &policy, None, &mut log)?;
    if log.checkpoints.last().map(|c| c.iteration) != Some(config.episodes) {
        log.checkpoints.push(Checkpoint {
            iteration: config.episodes,
            theta: policy.theta().to_vec(),
        });
    }
    Ok(TrainOutcome { policy, log })
}
