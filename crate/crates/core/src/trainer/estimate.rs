use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::AdvantageSample;
use crate::policy::LogLinearPolicy;
use crate::{Error, Result};

/// Unnormalized sums `F_hat = sum g g^T` and `nabla_hat = sum A_hat g` over
/// score vectors `g` of the current policy.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherAndGradientEstimate {
    pub f_hat: DMatrix<f64>,
    pub nabla_hat: DVector<f64>,
    pub count: usize,
}

pub fn estimate_fisher_and_gradient(
    samples: &[AdvantageSample],
    pi_t: &LogLinearPolicy,
) -> Result<FisherAndGradientEstimate> {
    if samples.is_empty() {
        return Err(Error::InvalidConfig("no advantage samples".into()));
    }
    let scores: Vec<Vec<f64>> = samples
        .par_iter()
        .map(|s| pi_t.score(&s.observation, s.action))
        .collect::<Result<_>>()?;
    let d = pi_t.dim();
    let mut f_hat = DMatrix::zeros(d, d);
    let mut nabla_hat = DVector::zeros(d);
    // Fixed accumulation order keeps the sums bit-reproducible.
    for (s, g) in samples.iter().zip(scores) {
        let g = DVector::from_vec(g);
        f_hat.ger(1.0, &g, &g, 1.0);
        nabla_hat.axpy(s.a_hat, &g, 1.0);
    }
    Ok(FisherAndGradientEstimate {
        f_hat,
        nabla_hat,
        count: samples.len(),
    })
}
