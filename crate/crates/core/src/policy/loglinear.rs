use serde::{Deserialize, Serialize};

use super::{FeatureMap, Policy};
use crate::lmdp::Action;
use crate::{Error, Result};

/// Logits are clamped to this magnitude before exponentiation.
pub const LOGIT_CLAMP: f64 = 40.0;

pub fn stable_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `pi_theta(accept|s) = exp(theta^T phi(s)) / (exp(theta^T phi(s)) + 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLinearPolicy {
    theta: Vec<f64>,
    features: FeatureMap,
}

impl LogLinearPolicy {
    pub fn new(theta: Vec<f64>, features: FeatureMap) -> Result<Self> {
        if theta.len() != features.dim() {
            return Err(Error::DimensionMismatch {
                expected: features.dim(),
                actual: theta.len(),
            });
        }
        Ok(Self { theta, features })
    }

    /// `theta = 0^d`.
    pub fn zeros(features: FeatureMap) -> Self {
        Self {
            theta: vec![0.0; features.dim()],
            features,
        }
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        Self::new(theta, self.features.clone())
    }

    /// `theta + eta * step`.
    pub fn stepped(&self, eta: f64, step: &[f64]) -> Result<Self> {
        if step.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: step.len(),
            });
        }
        let theta = self.theta.iter().zip(step).map(|(t, g)| t + eta * g).collect();
        self.with_theta(theta)
    }

    /// Unclamped logit `theta^T phi(s)`.
    pub fn logit(&self, obs: &[f64]) -> Result<f64> {
        let z: f64 = self
            .features
            .evaluate(obs)
            .iter()
            .zip(&self.theta)
            .map(|(p, t)| p * t)
            .sum();
        if !z.is_finite() {
            return Err(Error::ParameterOverflow(z));
        }
        Ok(z)
    }

    /// `grad_theta ln pi_theta(a|s)`: `(1 - pi(s)) phi(s)` for accept and
    /// `-pi(s) phi(s)` for reject.
    pub fn score(&self, obs: &[f64], action: Action) -> Result<Vec<f64>> {
        let phi = self.features.evaluate(obs);
        let probs = self.probs_from_phi(&phi)?;
        let c = match action {
            Action::Accept => probs[1],
            Action::Reject => -probs[0],
        };
        Ok(phi.into_iter().map(|x| c * x).collect())
    }

    /// Score and action probabilities from a precomputed feature vector.
    pub fn probs_from_phi(&self, phi: &[f64]) -> Result<[f64; 2]> {
        let z: f64 = phi.iter().zip(&self.theta).map(|(p, t)| p * t).sum();
        if !z.is_finite() {
            return Err(Error::ParameterOverflow(z));
        }
        let z = z.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
        Ok([stable_sigmoid(z), stable_sigmoid(-z)])
    }
}

impl Policy for LogLinearPolicy {
    fn action_probs(&self, obs: &[f64]) -> Result<[f64; 2]> {
        self.probs_from_phi(&self.features.evaluate(obs))
    }

    fn describe(&self) -> String {
        format!("log-linear (d = {})", self.dim())
    }
}
