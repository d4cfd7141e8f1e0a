use crate::{Error, Result};

/// Index `k` of the optimal threshold rule "accept `i` iff `i > k`", from
/// `sum_{i=k+2}^n P_i/(1-P_i) <= 1 < sum_{i=k+1}^n P_i/(1-P_i)`.
///
/// The threshold is `p = k / n`. Needs `P_i < 1` for `i >= 2`.
pub fn optimal_threshold_from_series(p_series: &[f64]) -> Result<usize> {
    let n = p_series.len();
    if n == 0 {
        return Err(Error::InvalidConfig("empty probability series".into()));
    }
    if p_series[1..].iter().any(|&p| !(p < 1.0)) {
        return Err(Error::InvalidConfig(
            "some P_i = 1 for i >= 2: no closed-form threshold, use the DP".into(),
        ));
    }
    // tail = sum_{i=k+1}^n P_i/(1-P_i); walk k downward from n.
    let mut tail = 0.0;
    for k in (1..n).rev() {
        let p = p_series[k];
        tail += p / (1.0 - p);
        if tail > 1.0 {
            return Ok(k);
        }
    }
    Ok(0)
}
