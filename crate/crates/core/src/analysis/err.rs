use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lmdp::{Environment, McEstimate, TabularLmdp};
use crate::policy::{LogLinearPolicy, Policy};
use crate::rng::stream;
use crate::trainer::sample_advantage;
use crate::{Error, Result};

/// Running `sum_i beta^{t-i} x_i / sum_i beta^{t-i}` with `beta = 1 - eta lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayedAverage {
    beta: f64,
    num: f64,
    den: f64,
}

impl DecayedAverage {
    pub fn new(eta: f64, lambda: f64) -> Result<Self> {
        let rate = eta * lambda;
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidConfig(format!(
                "eta * lambda = {rate} must lie in [0, 1)"
            )));
        }
        Ok(Self {
            beta: 1.0 - rate,
            num: 0.0,
            den: 0.0,
        })
    }

    pub fn push(&mut self, x: f64) -> f64 {
        self.num = self.beta * self.num + x;
        self.den = self.beta * self.den + 1.0;
        self.num / self.den
    }

    pub fn value(&self) -> Option<f64> {
        (self.den > 0.0).then(|| self.num / self.den)
    }
}

pub fn decayed_average(values: &[f64], eta: f64, lambda: f64) -> Result<Vec<f64>> {
    let mut avg = DecayedAverage::new(eta, lambda)?;
    Ok(values.iter().map(|&x| avg.push(x)).collect())
}

/// Per-iteration `err_t` and its decayed average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrTrace {
    pub values: Vec<f64>,
    pub averages: Vec<f64>,
    #[serde(skip)]
    running: Option<DecayedAverage>,
}

impl ErrTrace {
    pub fn new(eta: f64, lambda: f64) -> Result<Self> {
        Ok(Self {
            values: Vec::new(),
            averages: Vec::new(),
            running: Some(DecayedAverage::new(eta, lambda)?),
        })
    }

    pub fn push(&mut self, err: f64) {
        let avg = self.running.as_mut().expect("trace built with ErrTrace::new").push(err);
        self.values.push(err);
        self.averages.push(avg);
    }
}

/// Exact `err_t` on an enumerable model.
pub fn fitting_error_exact(
    model: &TabularLmdp,
    reference: &dyn Policy,
    pi_t: &LogLinearPolicy,
    step: &[f64],
    lambda: f64,
) -> Result<f64> {
    model.fitting_error(reference, pi_t, step, lambda)
}

/// Monte Carlo `err_t`: for each of `episodes` batches and each step `h`,
/// roll the reference policy to `(s_h, a_h)` and use the unbiased advantage
/// estimator of `pi_t` there. The estimate is a mean over per-batch sums.
#[allow(clippy::too_many_arguments)]
pub fn fitting_error_mc<E: Environment>(
    env: &E,
    reference: &dyn Policy,
    pi_t: &LogLinearPolicy,
    step: &[f64],
    lambda: f64,
    clip: f64,
    episodes: usize,
    seed: u64,
) -> Result<McEstimate> {
    if episodes == 0 {
        return Err(Error::InvalidConfig("episodes must be >= 1".into()));
    }
    if step.len() != pi_t.dim() {
        return Err(Error::DimensionMismatch {
            expected: pi_t.dim(),
            actual: step.len(),
        });
    }
    let horizon = env.horizon();
    let sums = (0..episodes)
        .into_par_iter()
        .map(|n| {
            let mut total = 0.0;
            for h in 0..horizon {
                let mut rng = stream(seed, &[n as u64, h as u64]);
                if let Some(s) = sample_advantage(env, reference, false, pi_t, h, lambda, clip, &mut rng)? {
                    let fit: f64 = pi_t
                        .score(&s.observation, s.action)?
                        .iter()
                        .zip(step)
                        .map(|(a, b)| a * b)
                        .sum();
                    total += s.a_hat - fit;
                }
            }
            Ok(total)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(McEstimate::from_samples(&sums))
}
