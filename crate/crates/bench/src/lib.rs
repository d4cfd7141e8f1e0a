//! Shared fixtures for the benchmarks.

use lmdp_npg::envs::{SpConfig, SpEnv};
use lmdp_npg::{FeatureMap, LogLinearPolicy};

/// Classical Secretary Problem with `n` candidates.
pub fn classical_sp(n: usize) -> SpEnv {
    SpEnv::new(SpConfig::classical(n).expect("n >= 1"))
}

/// Deterministic pseudo-random values in `[-scale, scale]`.
pub fn spread(len: usize, scale: f64, salt: u64) -> Vec<f64> {
    (0..len)
        .map(|i| scale * ((i as f64 + 1.0) * 12.9898 + salt as f64 * 78.233).sin())
        .collect()
}

/// Degree-4 polynomial SP policy with fixed, non-trivial parameters.
pub fn sp_policy(salt: u64) -> LogLinearPolicy {
    let features = FeatureMap::SpPoly { d0: 4 };
    LogLinearPolicy::new(spread(features.dim(), 2.0, salt), features).expect("dimension matches")
}
