use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::lmdp::{Environment, Episode};
use crate::policy::{sample_action, NaiveRandomPolicy, Policy};
use crate::rng::stream;
use crate::Result;

/// Two-action difference features `phi(s) = phi(s, accept) - phi(s, reject)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureMap {
    /// `(1, f, .., f^{d0-1}, x, f x, .., f^{d0-1} x)` over SP observations `(f, x)`.
    SpPoly {
        d0: usize,
    },
    /// All monomials `f^a s^b v^c r^d q^e` with exponents `< d0`.
    OkdPoly {
        d0: usize,
    },
    OneHot(OneHotFeatures),
}

impl FeatureMap {
    pub fn dim(&self) -> usize {
        match self {
            FeatureMap::SpPoly { d0 } => 2 * d0,
            FeatureMap::OkdPoly { d0 } => d0.pow(5),
            FeatureMap::OneHot(h) => h.len(),
        }
    }

    /// Observation dimension the map expects, if fixed.
    pub fn observation_dim(&self) -> Option<usize> {
        match self {
            FeatureMap::SpPoly { .. } => Some(2),
            FeatureMap::OkdPoly { .. } => Some(5),
            FeatureMap::OneHot(_) => None,
        }
    }

    pub fn evaluate(&self, obs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.write(obs, &mut out);
        out
    }

    pub fn write(&self, obs: &[f64], out: &mut [f64]) {
        match self {
            FeatureMap::SpPoly { d0 } => {
                let (f, x) = (obs[0], obs[1]);
                let mut p = 1.0;
                for k in 0..*d0 {
                    out[k] = p;
                    out[d0 + k] = p * x;
                    p *= f;
                }
            }
            FeatureMap::OkdPoly { d0 } => {
                let d0 = *d0;
                let powers: Vec<Vec<f64>> = obs[..5]
                    .iter()
                    .map(|&x| {
                        let mut v = Vec::with_capacity(d0);
                        let mut p = 1.0;
                        for _ in 0..d0 {
                            v.push(p);
                            p *= x;
                        }
                        v
                    })
                    .collect();
                let mut idx = 0;
                for a in 0..d0 {
                    for b in 0..d0 {
                        let ab = powers[0][a] * powers[1][b];
                        for c in 0..d0 {
                            let abc = ab * powers[2][c];
                            for d in 0..d0 {
                                let abcd = abc * powers[3][d];
                                for e in 0..d0 {
                                    out[idx] = abcd * powers[4][e];
                                    idx += 1;
                                }
                            }
                        }
                    }
                }
            }
            FeatureMap::OneHot(h) => {
                out.iter_mut().for_each(|x| *x = 0.0);
                if let Some(i) = h.index_of(obs) {
                    out[i] = 1.0;
                }
            }
        }
    }

    /// Supremum of `||phi(s)||_2` over inputs in the unit box (polynomial maps)
    /// or over all states (one-hot).
    pub fn analytic_norm_bound(&self) -> f64 {
        match self {
            FeatureMap::OneHot(_) => 1.0,
            _ => (self.dim() as f64).sqrt(),
        }
    }
}

/// `phi(s) = One-hot(s)` over a fixed list of observations. Unknown
/// observations map to the zero vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "OneHotRepr", into = "OneHotRepr")]
pub struct OneHotFeatures {
    observations: Vec<Vec<f64>>,
    index: HashMap<Vec<u64>, usize>,
}

#[derive(Serialize, Deserialize)]
struct OneHotRepr {
    observations: Vec<Vec<f64>>,
}

impl From<OneHotRepr> for OneHotFeatures {
    fn from(r: OneHotRepr) -> Self {
        OneHotFeatures::new(r.observations)
    }
}

impl From<OneHotFeatures> for OneHotRepr {
    fn from(h: OneHotFeatures) -> Self {
        OneHotRepr {
            observations: h.observations,
        }
    }
}

impl PartialEq for OneHotFeatures {
    fn eq(&self, other: &Self) -> bool {
        self.observations == other.observations
    }
}

fn bits(obs: &[f64]) -> Vec<u64> {
    obs.iter().map(|x| x.to_bits()).collect()
}

impl OneHotFeatures {
    pub fn new(observations: Vec<Vec<f64>>) -> Self {
        let mut index = HashMap::new();
        let mut kept = Vec::new();
        for o in observations {
            let k = bits(&o);
            if let std::collections::hash_map::Entry::Vacant(e) = index.entry(k) {
                e.insert(kept.len());
                kept.push(o);
            }
        }
        Self {
            observations: kept,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn index_of(&self, obs: &[f64]) -> Option<usize> {
        self.index.get(&bits(obs)).copied()
    }

    pub fn observations(&self) -> &[Vec<f64>] {
        &self.observations
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormBound {
    /// Largest norm seen over sampled reachable states.
    pub empirical: f64,
    pub analytic: f64,
}

/// Feature norm bound: empirical maximum over states visited by the naive
/// random policy in `samples` episodes, plus the analytic bound.
pub fn feature_norm_bound<E: Environment>(
    features: &FeatureMap,
    env: &E,
    samples: usize,
    seed: u64,
) -> Result<NormBound> {
    let mut rng = stream(seed, &[0x4e4f_524d]);
    let mut empirical: f64 = 0.0;
    let naive = NaiveRandomPolicy;
    for _ in 0..samples.max(1) {
        let mut ep = env.reset(&mut rng);
        while !ep.is_terminal() {
            let obs = ep.observation();
            let norm = features.evaluate(&obs).iter().map(|x| x * x).sum::<f64>().sqrt();
            empirical = empirical.max(norm);
            let a = sample_action(&naive.action_probs(&obs)?, &mut rng);
            ep.step(a);
        }
    }
    Ok(NormBound {
        empirical,
        analytic: features.analytic_norm_bound(),
    })
}
