use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lmdp::{Environment, Episode, StateActionWeighting, TabularLmdp};
use crate::policy::{sample_action, LogLinearPolicy, NaiveRandomPolicy, Policy};
use crate::rng::stream;
use crate::trainer::Sampler;
use crate::{Error, Result};

/// Relative eigenvalue tolerance of the rank test.
pub const RANK_TOL: f64 = 1e-9;

fn floor_frac(n: usize, p: f64) -> usize {
    // Guard against n * p landing a hair below an integer.
    (n as f64 * p + 1e-9).floor().max(0.0) as usize
}

/// Closed-form `(k_curl, k_naive)` for a `p`-threshold optimal policy and a
/// `q`-threshold sampler. `k_curl` is `+inf` when some `P_j = 1` blocks the
/// sampler from reaching the optimal acceptance region.
pub fn kappa_closed_form_sp(p_series: &[f64], p: f64, q: f64) -> Result<(f64, f64)> {
    let n = p_series.len();
    if n == 0 || !(0.0..1.0).contains(&p) || !(0.0..1.0).contains(&q) {
        return Err(Error::InvalidConfig("need a series and p, q in [0, 1)".into()));
    }
    let big_p = |j: usize| p_series[j - 1];
    let np = floor_frac(n, p);
    let nq = floor_frac(n, q);
    let k_curl = if q <= p {
        (nq + 1..=np)
            .map(|j| {
                let rest = 1.0 - big_p(j);
                if rest > 0.0 {
                    1.0 / rest
                } else {
                    f64::INFINITY
                }
            })
            .product()
    } else {
        1.0
    };
    let mut best: f64 = 1.0;
    let mut prod = 1.0;
    for i in np + 2..=n {
        prod *= 2.0 * (1.0 - big_p(i - 1));
        best = best.max(prod);
    }
    let k_naive = 2f64.powi(np as i32) * best;
    Ok((k_curl, k_naive))
}

fn symmetric(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest generalized eigenvalue `sup_x x^T A x / x^T B x` for PSD `A`
/// (reference) and `B` (sampler), after adding `ridge I` to `B`.
///
/// With no ridge, the quotient is taken on the range of `B`; mass of `A`
/// outside it (relative tolerance [`RANK_TOL`]) gives `+inf`.
pub fn kappa_from_matrices(sigma_star: &DMatrix<f64>, sigma_t: &DMatrix<f64>, ridge: f64) -> Result<f64> {
    let d = sigma_star.nrows();
    if sigma_star.ncols() != d || sigma_t.nrows() != d || sigma_t.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: sigma_t.nrows(),
        });
    }
    if !(ridge >= 0.0) {
        return Err(Error::InvalidConfig("ridge must be >= 0".into()));
    }
    let a = symmetric(sigma_star);
    let b = symmetric(sigma_t) + DMatrix::identity(d, d) * ridge;
    let ea = SymmetricEigen::new(a.clone());
    let a_max = ea.eigenvalues.amax();
    if ea.eigenvalues.min() < -RANK_TOL * a_max.max(f64::MIN_POSITIVE) {
        return Err(Error::Numeric("reference matrix is not PSD".into()));
    }
    if a_max == 0.0 {
        return Ok(0.0);
    }
    let eb = SymmetricEigen::new(b);
    let b_max = eb.eigenvalues.amax();
    if eb.eigenvalues.min() < -RANK_TOL * b_max.max(f64::MIN_POSITIVE) {
        return Err(Error::Numeric("sampler matrix is not PSD".into()));
    }
    let cut = RANK_TOL * b_max;
    let range: Vec<usize> = (0..d).filter(|&i| eb.eigenvalues[i] > cut).collect();
    let null: Vec<usize> = (0..d).filter(|&i| eb.eigenvalues[i] <= cut).collect();
    if !null.is_empty() {
        let nb = eb.eigenvectors.select_columns(&null);
        let leak = (nb.transpose() * &a * &nb).amax();
        if leak > RANK_TOL * a_max {
            return Ok(f64::INFINITY);
        }
    }
    if range.is_empty() {
        return Ok(f64::INFINITY);
    }
    let vr = eb.eigenvectors.select_columns(&range);
    let inv_sqrt = DVector::from_iterator(range.len(), range.iter().map(|&i| eb.eigenvalues[i].powf(-0.5)));
    let scaled = &vr * DMatrix::from_diagonal(&inv_sqrt);
    let m = symmetric(&(scaled.transpose() * &a * &scaled));
    Ok(SymmetricEigen::new(m).eigenvalues.max().max(0.0))
}

/// Exact `kappa(theta)` on an enumerable model: reference matrix from the
/// reference policy's state-action visitation, sampler matrix from the
/// sampler's distribution (on-policy `d^theta` or a grafted `d~`).
pub fn kappa_empirical(
    model: &TabularLmdp,
    reference: &dyn Policy,
    sampler: &Sampler,
    theta: &LogLinearPolicy,
    ridge: f64,
) -> Result<f64> {
    let sigma_star = model.fisher(theta, StateActionWeighting::OnPolicy(reference))?;
    let weighting = match sampler {
        Sampler::OnPolicy => StateActionWeighting::OnPolicy(theta),
        Sampler::NaiveRandom => StateActionWeighting::Grafted(&NaiveRandomPolicy),
        Sampler::Fixed(p) => StateActionWeighting::Grafted(p.as_ref()),
    };
    let sigma_t = model.fisher(theta, weighting)?;
    kappa_from_matrices(&sigma_star, &sigma_t, ridge)
}

fn mc_fisher<E: Environment>(
    env: &E,
    roll_in: &dyn Policy,
    uniform_action: bool,
    theta: &LogLinearPolicy,
    batches: usize,
    seed: u64,
    tag: u64,
) -> Result<DMatrix<f64>> {
    let horizon = env.horizon();
    let d = theta.dim();
    let scores: Vec<Option<Vec<f64>>> = (0..batches * horizon)
        .into_par_iter()
        .map(|k| {
            let h = k % horizon;
            let mut rng = stream(seed, &[tag, k as u64]);
            let mut ep = env.reset(&mut rng);
            for _ in 0..h {
                if ep.is_terminal() {
                    return Ok(None);
                }
                let a = sample_action(&roll_in.action_probs(&ep.observation())?, &mut rng);
                ep.step(a);
            }
            if ep.is_terminal() {
                return Ok(None);
            }
            let obs = ep.observation();
            let a = if uniform_action {
                sample_action(&[0.5, 0.5], &mut rng)
            } else {
                sample_action(&roll_in.action_probs(&obs)?, &mut rng)
            };
            theta.score(&obs, a).map(Some)
        })
        .collect::<Result<_>>()?;
    let mut f = DMatrix::zeros(d, d);
    for g in scores.into_iter().flatten() {
        let g = DVector::from_vec(g);
        f.ger(1.0 / batches as f64, &g, &g, 1.0);
    }
    Ok(f)
}

/// Monte Carlo `kappa(theta)`: both matrices estimated from `batches`
/// trajectories per step index. The rank test is only as reliable as the
/// estimates, so use at least `10 d^2` samples.
pub fn kappa_empirical_mc<E: Environment>(
    env: &E,
    reference: &dyn Policy,
    sampler: &Sampler,
    theta: &LogLinearPolicy,
    batches: usize,
    seed: u64,
    ridge: f64,
) -> Result<f64> {
    if batches == 0 {
        return Err(Error::InvalidConfig("batches must be >= 1".into()));
    }
    let sigma_star = mc_fisher(env, reference, false, theta, batches, seed, 0)?;
    let sigma_t = match sampler {
        Sampler::OnPolicy => mc_fisher(env, theta, false, theta, batches, seed, 1)?,
        Sampler::NaiveRandom => mc_fisher(env, &NaiveRandomPolicy, true, theta, batches, seed, 1)?,
        Sampler::Fixed(p) => mc_fisher(env, p.as_ref(), true, theta, batches, seed, 1)?,
    };
    kappa_from_matrices(&sigma_star, &sigma_t, ridge)
}

/// Condition-number snapshot for one parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaReport {
    /// `k` from the closed form, when applicable.
    #[serde(with = "super::extended_f64::option")]
    pub kappa_lower: Option<f64>,
    /// `2k`.
    #[serde(with = "super::extended_f64::option")]
    pub kappa_upper: Option<f64>,
    #[serde(with = "super::extended_f64::option")]
    pub kappa_empirical: Option<f64>,
    pub at_theta: Vec<f64>,
    pub sampler: String,
    /// True when the reference is a proxy rather than an optimal policy.
    pub reference_relative: bool,
}

impl KappaReport {
    pub fn closed_form(k: f64, at_theta: Vec<f64>, sampler: &str) -> Self {
        Self {
            kappa_lower: Some(k),
            kappa_upper: Some(2.0 * k),
            kappa_empirical: None,
            at_theta,
            sampler: sampler.into(),
            reference_relative: false,
        }
    }

    /// Whether the empirical value lies in `[k, 2k]` (within `tol`).
    pub fn within_sandwich(&self, tol: f64) -> Option<bool> {
        match (self.kappa_lower, self.kappa_upper, self.kappa_empirical) {
            (Some(lo), Some(hi), Some(k)) => Some(k >= lo - tol && k <= hi + tol),
            _ => None,
        }
    }
}
