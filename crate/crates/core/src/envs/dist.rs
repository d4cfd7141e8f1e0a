use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::stream;
use crate::{Error, Result};

/// Piecewise-uniform distribution on `[0, 1]` with `gran` equal-width bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GranularDistribution {
    gran: usize,
    /// Unnormalized bin weights.
    bin_weights: Vec<f64>,
}

impl GranularDistribution {
    pub fn new(bin_weights: Vec<f64>) -> Result<Self> {
        if bin_weights.is_empty() || bin_weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidConfig("bin weights must be positive".into()));
        }
        Ok(Self {
            gran: bin_weights.len(),
            bin_weights,
        })
    }

    pub fn gran(&self) -> usize {
        self.gran
    }

    pub fn bin_weights(&self) -> &[f64] {
        &self.bin_weights
    }

    /// Bin `i ~ Multinomial(p_1..p_gran)`, then `x = (i - 1 + Unif[0,1]) / gran`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let total: f64 = self.bin_weights.iter().sum();
        let u = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut bin = self.gran - 1;
        for (i, w) in self.bin_weights.iter().enumerate() {
            acc += w;
            if u < acc {
                bin = i;
                break;
            }
        }
        (bin as f64 + rng.gen::<f64>()) / self.gran as f64
    }

    /// Analytic CDF, piecewise linear between bin edges.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let total: f64 = self.bin_weights.iter().sum();
        let pos = x * self.gran as f64;
        let full = pos.floor() as usize;
        let below: f64 = self.bin_weights[..full].iter().sum();
        (below + self.bin_weights[full] * (pos - full as f64)) / total
    }
}

/// Draws `gran` bin weights i.i.d. `Unif[0, 1]` (resampling exact zeros).
pub fn okd_sample_distribution(gran: usize, seed: u64) -> Result<GranularDistribution> {
    if gran == 0 {
        return Err(Error::InvalidConfig("gran must be >= 1".into()));
    }
    let mut rng = stream(seed, &[0x4752_414e]);
    let weights = (0..gran)
        .map(|_| loop {
            let w: f64 = rng.gen();
            if w > 0.0 {
                break w;
            }
        })
        .collect();
    GranularDistribution::new(weights)
}

/// Distribution of item values or sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ItemDistribution {
    Uniform,
    Granular(GranularDistribution),
    /// Finite support `(point, probability)`; enables exact enumeration.
    Discrete {
        points: Vec<(f64, f64)>,
    },
}

impl ItemDistribution {
    pub fn point(x: f64) -> Self {
        ItemDistribution::Discrete { points: vec![(x, 1.0)] }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ItemDistribution::Uniform => rng.gen(),
            ItemDistribution::Granular(g) => g.sample(rng),
            ItemDistribution::Discrete { points } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for &(x, p) in points {
                    acc += p;
                    if u < acc {
                        return x;
                    }
                }
                points.last().map_or(0.0, |p| p.0)
            }
        }
    }

    pub fn support(&self) -> Option<&[(f64, f64)]> {
        match self {
            ItemDistribution::Discrete { points } => Some(points),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let ItemDistribution::Discrete { points } = self {
            let total: f64 = points.iter().map(|p| p.1).sum();
            if points.is_empty()
                || points.iter().any(|&(x, p)| !(0.0..=1.0).contains(&x) || !(p > 0.0))
                || (total - 1.0).abs() > 1e-12
            {
                return Err(Error::InvalidConfig("discrete item distribution is invalid".into()));
            }
        }
        Ok(())
    }
}
