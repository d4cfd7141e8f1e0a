use std::sync::Arc;

use super::{fitting_error_mc, kappa_empirical, kappa_empirical_mc};
use crate::lmdp::{evaluate_value_mc, Environment, McEstimate, TabularLmdp};
use crate::policy::{LogLinearPolicy, Policy};
use crate::trainer::{Probe, Sampler};
use crate::Result;

/// Diagnostics computed exactly on an enumerable model against an optimal
/// reference policy. Rewards are exact values (zero-width intervals).
pub struct ExactProbe {
    model: TabularLmdp,
    reference: Arc<dyn Policy>,
    ridge: f64,
    measure_kappa: bool,
}

impl ExactProbe {
    pub fn new(model: TabularLmdp, reference: Arc<dyn Policy>) -> Self {
        Self {
            model,
            reference,
            ridge: 0.0,
            measure_kappa: true,
        }
    }

    pub fn with_ridge(mut self, ridge: f64) -> Self {
        self.ridge = ridge;
        self
    }

    pub fn without_kappa(mut self) -> Self {
        self.measure_kappa = false;
        self
    }

    pub fn model(&self) -> &TabularLmdp {
        &self.model
    }
}

impl Probe for ExactProbe {
    fn reward(&self, policy: &LogLinearPolicy, lambda: f64, _seed: u64) -> Result<McEstimate> {
        Ok(McEstimate {
            mean: self.model.value(policy, lambda)?,
            ci95: 0.0,
        })
    }

    fn kappa(&self, policy: &LogLinearPolicy, sampler: &Sampler) -> Result<Option<f64>> {
        if !self.measure_kappa {
            return Ok(None);
        }
        kappa_empirical(&self.model, self.reference.as_ref(), sampler, policy, self.ridge).map(Some)
    }

    fn fitting_error(&self, policy: &LogLinearPolicy, step: &[f64], lambda: f64, _seed: u64) -> Result<Option<f64>> {
        self.model
            .fitting_error(self.reference.as_ref(), policy, step, lambda)
            .map(Some)
    }
}

/// Sampling-based diagnostics for environments without an exact model. The
/// reference is typically a heuristic, so every quantity is
/// reference-relative.
pub struct MonteCarloProbe<E> {
    env: E,
    reference: Arc<dyn Policy>,
    pub eval_episodes: usize,
    pub err_episodes: usize,
    /// Trajectories per step index for each covariance estimate; 0 skips kappa.
    pub kappa_batches: usize,
    pub kappa_seed: u64,
    pub clip: f64,
    pub ridge: f64,
}

impl<E: Environment> MonteCarloProbe<E> {
    pub fn new(env: E, reference: Arc<dyn Policy>, clip: f64) -> Self {
        Self {
            env,
            reference,
            eval_episodes: 2000,
            err_episodes: 500,
            kappa_batches: 0,
            kappa_seed: 0,
            clip,
            ridge: 0.0,
        }
    }
}

impl<E: Environment> Probe for MonteCarloProbe<E> {
    fn reward(&self, policy: &LogLinearPolicy, lambda: f64, seed: u64) -> Result<McEstimate> {
        evaluate_value_mc(&self.env, policy, lambda, self.eval_episodes.max(1), seed)
    }

    fn kappa(&self, policy: &LogLinearPolicy, sampler: &Sampler) -> Result<Option<f64>> {
        if self.kappa_batches == 0 {
            return Ok(None);
        }
        kappa_empirical_mc(
            &self.env,
            self.reference.as_ref(),
            sampler,
            policy,
            self.kappa_batches,
            self.kappa_seed,
            self.ridge,
        )
        .map(Some)
    }

    fn fitting_error(&self, policy: &LogLinearPolicy, step: &[f64], lambda: f64, seed: u64) -> Result<Option<f64>> {
        if self.err_episodes == 0 {
            return Ok(None);
        }
        fitting_error_mc(
            &self.env,
            self.reference.as_ref(),
            policy,
            step,
            lambda,
            self.clip,
            self.err_episodes,
            seed,
        )
        .map(|e| Some(e.mean))
    }
}
