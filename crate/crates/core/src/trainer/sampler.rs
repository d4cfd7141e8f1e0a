use std::f64::consts::LN_2;

use rand::Rng;
use rayon::prelude::*;

use crate::lmdp::{entropy, Action, Environment, Episode};
use crate::policy::{sample_action, Policy};
use crate::rng::stream;
use crate::{Error, Result};

/// One draw of the unbiased advantage estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageSample {
    pub observation: Vec<f64>,
    /// The recorded action (before any re-draw).
    pub action: Action,
    pub a_hat: f64,
    /// Step index `0..H` at which the state was reached.
    pub h: usize,
}

/// Almost-sure bound `2 [1 + lambda U + H (1 + lambda ln 2)]` on `|A_hat|`.
pub fn advantage_bound(horizon: usize, lambda: f64, clip: f64) -> f64 {
    2.0 * (1.0 + lambda * clip + horizon as f64 * (1.0 + lambda * LN_2))
}

/// Draws one advantage sample: roll `pi_samp` for `h` steps, pick an action
/// (uniform if `unif`), then estimate `A^{pi_t, lambda}_{H-h}` at that pair
/// by a coin flip between a re-drawn `pi_t` action (weight -2) and the
/// recorded action (weight +2), followed by a `pi_t` rollout.
///
/// Returns `None` when the episode terminates before step `h`; the terminal
/// state contributes nothing to the losses.
#[allow(clippy::too_many_arguments)]
pub fn sample_advantage<E: Environment, R: Rng + ?Sized>(
    env: &E,
    pi_samp: &dyn Policy,
    unif: bool,
    pi_t: &dyn Policy,
    h: usize,
    lambda: f64,
    clip: f64,
    rng: &mut R,
) -> Result<Option<AdvantageSample>> {
    let horizon = env.horizon();
    if h >= horizon {
        return Err(Error::InvalidConfig(format!("step {h} outside horizon {horizon}")));
    }
    let mut ep = env.reset(rng);
    for _ in 0..h {
        if ep.is_terminal() {
            return Ok(None);
        }
        let a = sample_action(&pi_samp.action_probs(&ep.observation())?, rng);
        ep.step(a);
    }
    if ep.is_terminal() {
        return Ok(None);
    }
    let observation = ep.observation();
    let action = if unif {
        Action::from_index(rng.gen_range(0..Action::COUNT))
    } else {
        sample_action(&pi_samp.action_probs(&observation)?, rng)
    };
    let probs = pi_t.action_probs(&observation)?;
    let (c, mut ret) = if rng.gen::<f64>() < 0.5 {
        let redrawn = sample_action(&probs, rng);
        (-2.0, ep.step(redrawn) + lambda * entropy(&probs))
    } else {
        let neg_log = -probs[action.index()].ln();
        (2.0, ep.step(action) + lambda * neg_log.min(clip))
    };
    for _ in h + 1..horizon {
        if ep.is_terminal() {
            break;
        }
        let p = pi_t.action_probs(&ep.observation())?;
        let a = sample_action(&p, rng);
        ret += ep.step(a) + lambda * entropy(&p);
    }
    let a_hat = c * ret;
    let bound = advantage_bound(horizon, lambda, clip);
    assert!(
        a_hat.abs() <= bound * (1.0 + 1e-12),
        "advantage sample {a_hat} exceeds bound {bound}"
    );
    Ok(Some(AdvantageSample {
        observation,
        action,
        a_hat,
        h,
    }))
}

/// Collects the `batch x H` grid of samples for one iteration. Cell
/// `k = n H + h` draws from `stream(seed, [phase, iteration, k])`, so the
/// result is independent of the thread count.
#[allow(clippy::too_many_arguments)]
pub fn collect_samples<E: Environment>(
    env: &E,
    pi_samp: &dyn Policy,
    unif: bool,
    pi_t: &dyn Policy,
    batch: usize,
    lambda: f64,
    clip: f64,
    seed: u64,
    stream_prefix: &[u64],
) -> Result<Vec<AdvantageSample>> {
    let horizon = env.horizon();
    let cells: Vec<Option<AdvantageSample>> = (0..batch * horizon)
        .into_par_iter()
        .map(|k| {
            let mut path = stream_prefix.to_vec();
            path.push(k as u64);
            let mut rng = stream(seed, &path);
            sample_advantage(env, pi_samp, unif, pi_t, k % horizon, lambda, clip, &mut rng)
        })
        .collect::<Result<_>>()?;
    Ok(cells.into_iter().flatten().collect())
}

/// `sum_a pi ln(1/pi) - sum_a pi min(ln(1/pi), U)`; at most `|A| / e^{U+1}`.
pub fn clipped_entropy_gap(probs: &[f64; 2], clip: f64) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * (-p.ln() - (-p.ln()).min(clip)))
        .sum()
}
