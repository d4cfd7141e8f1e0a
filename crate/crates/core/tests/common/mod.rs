#![allow(dead_code)]

use lmdp_npg::policy::OneHotFeatures;
use lmdp_npg::{FeatureMap, LogLinearPolicy, TabularLmdp};
use rand::Rng;

/// All permutations of `0..n` (rank 0 is the best candidate).
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Best-so-far indicators of a rank permutation.
pub fn best_so_far(perm: &[usize]) -> Vec<bool> {
    let mut best = usize::MAX;
    perm.iter()
        .map(|&r| {
            let b = r < best;
            best = best.min(r);
            b
        })
        .collect()
}

/// SP observation of candidate `i` (1-based).
pub fn sp_obs(i: usize, n: usize, x: bool) -> Vec<f64> {
    vec![i as f64 / n as f64, if x { 1.0 } else { 0.0 }]
}

/// One-hot log-linear policy over a model's decision observations with
/// parameters drawn from `[-scale, scale]`.
pub fn random_one_hot_policy<R: Rng>(model: &TabularLmdp, scale: f64, rng: &mut R) -> LogLinearPolicy {
    let features = FeatureMap::OneHot(OneHotFeatures::new(model.decision_observations()));
    let theta = (0..features.dim()).map(|_| rng.gen_range(-scale..=scale)).collect();
    LogLinearPolicy::new(theta, features).unwrap()
}

pub fn one_hot_features(model: &TabularLmdp) -> FeatureMap {
    FeatureMap::OneHot(OneHotFeatures::new(model.decision_observations()))
}
