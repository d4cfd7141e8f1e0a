//! Policies over encoded observations.

mod features;
mod loglinear;

pub use features::{feature_norm_bound, FeatureMap, NormBound, OneHotFeatures};
pub use loglinear::{stable_sigmoid, LogLinearPolicy, LOGIT_CLAMP};

use rand::Rng;

use crate::lmdp::Action;
use crate::Result;

/// A history-independent stochastic policy over two actions.
pub trait Policy: Send + Sync {
    /// `[pi(accept|s), pi(reject|s)]`.
    fn action_probs(&self, obs: &[f64]) -> Result<[f64; 2]>;

    fn describe(&self) -> String;
}

pub fn sample_action<R: Rng + ?Sized>(probs: &[f64; 2], rng: &mut R) -> Action {
    if rng.gen::<f64>() < probs[0] {
        Action::Accept
    } else {
        Action::Reject
    }
}

/// Accepts with probability 1/2 in every state.
#[derive(Debug, Clone, Copy, Default)]
pub struct NaiveRandomPolicy;

impl Policy for NaiveRandomPolicy {
    fn action_probs(&self, _obs: &[f64]) -> Result<[f64; 2]> {
        Ok([0.5, 0.5])
    }

    fn describe(&self) -> String {
        "naive random (accept w.p. 1/2)".into()
    }
}

/// State-independent policy; `accept = 1` / `0` gives always-accept / always-reject.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPolicy {
    pub accept: f64,
}

impl ConstantPolicy {
    pub const ALWAYS_ACCEPT: ConstantPolicy = ConstantPolicy { accept: 1.0 };
    pub const ALWAYS_REJECT: ConstantPolicy = ConstantPolicy { accept: 0.0 };
}

impl Policy for ConstantPolicy {
    fn action_probs(&self, _obs: &[f64]) -> Result<[f64; 2]> {
        Ok([self.accept, 1.0 - self.accept])
    }

    fn describe(&self) -> String {
        format!("constant (accept w.p. {})", self.accept)
    }
}

impl<P: Policy + ?Sized> Policy for &P {
    fn action_probs(&self, obs: &[f64]) -> Result<[f64; 2]> {
        (**self).action_probs(obs)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

impl<P: Policy + ?Sized> Policy for std::sync::Arc<P> {
    fn action_probs(&self, obs: &[f64]) -> Result<[f64; 2]> {
        (**self).action_probs(obs)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}
