use rand::Rng;
use rayon::prelude::*;

use super::exact::entropy;
use super::{Environment, Episode, Trajectory};
use crate::policy::{sample_action, Policy};
use crate::rng::{label, stream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    /// Half-width of the normal-approximation 95% interval.
    pub ci95: f64,
}

impl McEstimate {
    pub fn from_samples(xs: &[f64]) -> McEstimate {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return McEstimate { mean, ci95: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        McEstimate {
            mean,
            ci95: 1.96 * (var / n).sqrt(),
        }
    }
}

/// Runs one episode of `policy`, returning the regularized return and the
/// trajectory. Instance and action randomness come from separate streams so
/// different policies can share instances.
pub fn run_episode<E: Environment, R: Rng>(
    env: &E,
    policy: &dyn Policy,
    lambda: f64,
    instance_rng: &mut R,
    action_rng: &mut R,
) -> Result<(f64, Trajectory)> {
    let mut ep = env.reset(instance_rng);
    let component = ep.component();
    let mut steps = Vec::new();
    let mut ret = 0.0;
    for _ in 0..env.horizon() {
        if ep.is_terminal() {
            break;
        }
        let obs = ep.observation();
        let probs = policy.action_probs(&obs)?;
        let a = sample_action(&probs, action_rng);
        let r = ep.step(a);
        ret += r + lambda * entropy(&probs);
        steps.push((obs, a, r));
    }
    Ok((ret, Trajectory { steps, component }))
}

/// Monte Carlo estimate of `V^{pi,lambda}`. Episode `i` uses streams derived
/// from `(seed, i)`, so the result does not depend on the thread count.
pub fn evaluate_value_mc<E: Environment>(
    env: &E,
    policy: &dyn Policy,
    lambda: f64,
    episodes: usize,
    seed: u64,
) -> Result<McEstimate> {
    if episodes == 0 {
        return Err(Error::InvalidConfig("episodes must be >= 1".into()));
    }
    let returns = (0..episodes)
        .into_par_iter()
        .map(|i| {
            let mut inst = stream(seed, &[label::EVAL, i as u64, label::INSTANCE]);
            let mut act = stream(seed, &[label::EVAL, i as u64, label::ACTIONS]);
            run_episode(env, policy, lambda, &mut inst, &mut act).map(|(r, _)| r)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(McEstimate::from_samples(&returns))
}
