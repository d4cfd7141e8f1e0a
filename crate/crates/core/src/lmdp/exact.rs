//! Exact backward/forward recursions on a [`TabularLmdp`].
//!
//! Conventions: `h` in values and advantages counts the steps remaining, so
//! `V_{m,0} = 0`; visitation distributions are indexed by the step already
//! taken, `d_{m,0} = nu_m`. Terminal states absorb, take no action and
//! contribute nothing to any expectation over `(s, a)`.

use nalgebra::{DMatrix, DVector};

use super::{Action, TabularLmdp};
use crate::policy::{LogLinearPolicy, Policy};
use crate::{Error, Result};

/// Shannon entropy of an action distribution, with `0 ln 0 = 0`.
pub fn entropy(probs: &[f64; 2]) -> f64 {
    probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum()
}

fn neg_log(p: f64) -> f64 {
    if p > 0.0 {
        -p.ln()
    } else {
        f64::INFINITY
    }
}

/// How actions are paired with the states visited by a policy.
#[derive(Clone, Copy)]
pub enum StateActionWeighting<'p> {
    /// `d^pi(s) pi(a|s)`.
    OnPolicy(&'p dyn Policy),
    /// `d^pi(s) Unif(a)`: the grafted distribution.
    Grafted(&'p dyn Policy),
}

impl<'p> StateActionWeighting<'p> {
    fn state_policy(&self) -> &'p dyn Policy {
        match *self {
            StateActionWeighting::OnPolicy(p) | StateActionWeighting::Grafted(p) => p,
        }
    }
}

type Table = Vec<[f64; 2]>;

/// Per-component visitation, `[m][h][local]` for `h = 0..=H`.
pub type Visitation = Vec<Vec<Vec<f64>>>;

impl TabularLmdp {
    /// Action probabilities of `policy` at every non-terminal observation.
    pub fn policy_table(&self, policy: &dyn Policy) -> Result<Table> {
        self.observations()
            .iter()
            .enumerate()
            .map(|(g, o)| {
                if self.is_terminal(g) {
                    Ok([0.0, 0.0])
                } else {
                    policy.action_probs(o)
                }
            })
            .collect()
    }

    /// Backward recursion of `E[sum reward_scale * r + lambda * H(pi)]`,
    /// returned as `[m][h][local]` for `h = 0..=H`.
    fn backward(&self, probs: &Table, reward_scale: f64, lambda: f64) -> Vec<Vec<Vec<f64>>> {
        let horizon = self.horizon();
        self.components()
            .iter()
            .map(|c| {
                let n = c.states.len();
                let mut v = vec![vec![0.0; n]; horizon + 1];
                for h in 1..=horizon {
                    for s in 0..n {
                        let g = c.states[s];
                        if self.is_terminal(g) {
                            continue;
                        }
                        let pi = probs[g];
                        let mut total = lambda * entropy(&pi);
                        for a in Action::ALL {
                            let p = pi[a.index()];
                            if p == 0.0 {
                                continue;
                            }
                            let q: f64 = c.transitions[s][a.index()]
                                .iter()
                                .map(|t| t.prob * (reward_scale * t.reward + v[h - 1][t.next]))
                                .sum();
                            total += p * q;
                        }
                        v[h][s] = total;
                    }
                }
                v
            })
            .collect()
    }

    fn visitation_from_table(&self, probs: &Table) -> Visitation {
        let horizon = self.horizon();
        self.components()
            .iter()
            .map(|c| {
                let n = c.states.len();
                let mut d = vec![vec![0.0; n]; horizon + 1];
                for &(s, p) in &c.initial {
                    d[0][s] += p;
                }
                for h in 0..horizon {
                    let (cur, rest) = d.split_at_mut(h + 1);
                    let (cur, next) = (&cur[h], &mut rest[0]);
                    for s in 0..n {
                        let mass = cur[s];
                        if mass == 0.0 {
                            continue;
                        }
                        let g = c.states[s];
                        if self.is_terminal(g) {
                            next[s] += mass;
                            continue;
                        }
                        for a in Action::ALL {
                            let pa = probs[g][a.index()];
                            if pa == 0.0 {
                                continue;
                            }
                            for t in &c.transitions[s][a.index()] {
                                next[t.next] += mass * pa * t.prob;
                            }
                        }
                    }
                }
                d
            })
            .collect()
    }

    /// State visitation `d^pi_{m,h}(s)` for every component, `[m][h][local]`,
    /// `h = 0..=H`. Terminal states keep their mass so each slice sums to 1.
    pub fn visitation(&self, policy: &dyn Policy) -> Result<Visitation> {
        Ok(self.visitation_from_table(&self.policy_table(policy)?))
    }

    /// `d^pi_{m,h}` as `(global observation index, probability)` pairs.
    pub fn visitation_at(&self, policy: &dyn Policy, h: usize) -> Result<Vec<Vec<(usize, f64)>>> {
        if h > self.horizon() {
            return Err(Error::InvalidConfig(format!("step {h} exceeds horizon")));
        }
        let d = self.visitation(policy)?;
        Ok(self
            .components()
            .iter()
            .zip(d)
            .map(|(c, dm)| {
                c.states
                    .iter()
                    .zip(&dm[h])
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(&g, &p)| (g, p))
                    .collect()
            })
            .collect())
    }

    /// `V^{pi,lambda}`: mixture-weighted value of the full horizon.
    pub fn value(&self, policy: &dyn Policy, lambda: f64) -> Result<f64> {
        Ok(ExactEvaluation::new(self, policy, lambda)?.value())
    }

    /// Expected entropy return `sum_m w_m E_nu[H^pi_{m,H}]`, computed with its
    /// own recursion.
    pub fn entropy_return(&self, policy: &dyn Policy) -> Result<f64> {
        let probs = self.policy_table(policy)?;
        let v = self.backward(&probs, 0.0, 1.0);
        Ok(self.initial_average(&v))
    }

    fn initial_average(&self, v: &[Vec<Vec<f64>>]) -> f64 {
        let horizon = self.horizon();
        self.components()
            .iter()
            .zip(v)
            .map(|(c, vm)| c.weight * c.initial.iter().map(|&(s, p)| p * vm[horizon][s]).sum::<f64>())
            .sum()
    }

    /// Per-observation weight `sum_m w_m sum_{h<H} d_{m,h}(s) mu(a|s)` for
    /// both actions.
    fn state_action_mass(&self, weighting: StateActionWeighting<'_>) -> Result<Vec<[f64; 2]>> {
        let probs = self.policy_table(weighting.state_policy())?;
        let d = self.visitation_from_table(&probs);
        let mut mass = vec![[0.0; 2]; self.observations().len()];
        for (c, dm) in self.components().iter().zip(&d) {
            for dh in dm.iter().take(self.horizon()) {
                for (s, &p) in dh.iter().enumerate() {
                    let g = c.states[s];
                    if p == 0.0 || self.is_terminal(g) {
                        continue;
                    }
                    let mu = match weighting {
                        StateActionWeighting::OnPolicy(_) => probs[g],
                        StateActionWeighting::Grafted(_) => [0.5, 0.5],
                    };
                    mass[g][0] += c.weight * p * mu[0];
                    mass[g][1] += c.weight * p * mu[1];
                }
            }
        }
        Ok(mass)
    }

    /// Generic Fisher matrix
    /// `sum_m w_m sum_h E_{(s,a) ~ v}[score score^T]` with scores of `theta`.
    pub fn fisher(&self, theta: &LogLinearPolicy, weighting: StateActionWeighting<'_>) -> Result<DMatrix<f64>> {
        let mass = self.state_action_mass(weighting)?;
        let d = theta.dim();
        let mut f = DMatrix::zeros(d, d);
        for (g, w) in mass.iter().enumerate() {
            if w[0] == 0.0 && w[1] == 0.0 {
                continue;
            }
            let obs = &self.observations()[g];
            // Two-action scores are collinear with phi(s).
            let phi = DVector::from_vec(theta.features().evaluate(obs));
            let probs = theta.action_probs(obs)?;
            let c = w[0] * probs[1] * probs[1] + w[1] * probs[0] * probs[0];
            f.ger(c, &phi, &phi, 1.0);
        }
        Ok(f)
    }

    /// Exact policy gradient of `V^{pi_theta, lambda}`.
    pub fn policy_gradient(&self, policy: &LogLinearPolicy, lambda: f64) -> Result<Vec<f64>> {
        let eval = ExactEvaluation::new(self, policy, lambda)?;
        let d = self.visitation_from_table(&eval.probs);
        let horizon = self.horizon();
        let mut grad = vec![0.0; policy.dim()];
        for (m, c) in self.components().iter().enumerate() {
            for h in 1..=horizon {
                for (s, &p) in d[m][horizon - h].iter().enumerate() {
                    let g = c.states[s];
                    if p == 0.0 || self.is_terminal(g) {
                        continue;
                    }
                    let obs = &self.observations()[g];
                    for a in Action::ALL {
                        let pa = eval.probs[g][a.index()];
                        if pa == 0.0 {
                            continue;
                        }
                        let q = eval.q_value(m, h, s, a);
                        let score = policy.score(obs, a)?;
                        let coef = c.weight * p * pa * q;
                        for (gi, si) in grad.iter_mut().zip(&score) {
                            *gi += coef * si;
                        }
                    }
                }
            }
        }
        Ok(grad)
    }

    /// Fitting error
    /// `sum_m w_m sum_h E_{(s,a) ~ d*_{m,H-h}}[A^{t,lambda}_{m,h}(s,a) - g^T score_t(s,a)]`.
    pub fn fitting_error(
        &self,
        reference: &dyn Policy,
        current: &LogLinearPolicy,
        step: &[f64],
        lambda: f64,
    ) -> Result<f64> {
        self.weighted_residual(StateActionWeighting::OnPolicy(reference), current, step, lambda, false)
    }

    /// Compatible function approximation loss
    /// `sum_m w_m sum_h E_v[(A^{pi_theta,lambda}_{m,h} - g^T score)^2]`.
    pub fn compatible_loss(
        &self,
        current: &LogLinearPolicy,
        step: &[f64],
        weighting: StateActionWeighting<'_>,
        lambda: f64,
    ) -> Result<f64> {
        self.weighted_residual(weighting, current, step, lambda, true)
    }

    fn weighted_residual(
        &self,
        weighting: StateActionWeighting<'_>,
        current: &LogLinearPolicy,
        step: &[f64],
        lambda: f64,
        squared: bool,
    ) -> Result<f64> {
        if step.len() != current.dim() {
            return Err(Error::DimensionMismatch {
                expected: current.dim(),
                actual: step.len(),
            });
        }
        let eval = ExactEvaluation::new(self, current, lambda)?;
        let sprobs = self.policy_table(weighting.state_policy())?;
        let d = self.visitation_from_table(&sprobs);
        let horizon = self.horizon();
        let mut total = 0.0;
        for (m, c) in self.components().iter().enumerate() {
            for h in 0..horizon {
                for (s, &p) in d[m][h].iter().enumerate() {
                    let g = c.states[s];
                    if p == 0.0 || self.is_terminal(g) {
                        continue;
                    }
                    let mu = match weighting {
                        StateActionWeighting::OnPolicy(_) => sprobs[g],
                        StateActionWeighting::Grafted(_) => [0.5, 0.5],
                    };
                    let obs = &self.observations()[g];
                    for a in Action::ALL {
                        let pa = mu[a.index()];
                        if pa == 0.0 {
                            continue;
                        }
                        let adv = eval.advantage(m, horizon - h, s, a);
                        let fit: f64 = current.score(obs, a)?.iter().zip(step).map(|(x, y)| x * y).sum();
                        let r = adv - fit;
                        total += c.weight * p * pa * if squared { r * r } else { r };
                    }
                }
            }
        }
        Ok(total)
    }

    /// Both sides of the performance-difference identity:
    /// `V^{pi1} - V^{pi2}` and
    /// `sum_m w_m sum_h E_{d^{pi1}}[A^{pi2,lambda} + lambda ln(pi2/pi1)]`.
    pub fn performance_difference(&self, first: &dyn Policy, second: &dyn Policy, lambda: f64) -> Result<(f64, f64)> {
        let e1 = ExactEvaluation::new(self, first, lambda)?;
        let e2 = ExactEvaluation::new(self, second, lambda)?;
        let lhs = e1.value() - e2.value();
        let d = self.visitation_from_table(&e1.probs);
        let horizon = self.horizon();
        let mut rhs = 0.0;
        for (m, c) in self.components().iter().enumerate() {
            for h in 0..horizon {
                for (s, &p) in d[m][h].iter().enumerate() {
                    let g = c.states[s];
                    if p == 0.0 || self.is_terminal(g) {
                        continue;
                    }
                    for a in Action::ALL {
                        let p1 = e1.probs[g][a.index()];
                        if p1 == 0.0 {
                            continue;
                        }
                        let p2 = e2.probs[g][a.index()];
                        let term = e2.advantage(m, horizon - h, s, a) + lambda * (p2.ln() - p1.ln());
                        rhs += c.weight * p * p1 * term;
                    }
                }
            }
        }
        Ok((lhs, rhs))
    }
}

/// Value tables of one policy on one model.
pub struct ExactEvaluation<'a> {
    model: &'a TabularLmdp,
    probs: Table,
    lambda: f64,
    values: Vec<Vec<Vec<f64>>>,
}

impl<'a> ExactEvaluation<'a> {
    pub fn new(model: &'a TabularLmdp, policy: &dyn Policy, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {lambda}")));
        }
        let probs = model.policy_table(policy)?;
        let values = model.backward(&probs, 1.0, lambda);
        Ok(Self {
            model,
            probs,
            lambda,
            values,
        })
    }

    pub fn value(&self) -> f64 {
        self.model.initial_average(&self.values)
    }

    /// Unregularized value of the same policy (separate recursion).
    pub fn unregularized_value(&self) -> f64 {
        self.model.initial_average(&self.model.backward(&self.probs, 1.0, 0.0))
    }

    /// `V^{pi,lambda}_{m,h}(s)` at a local state.
    pub fn state_value(&self, m: usize, h: usize, s: usize) -> f64 {
        self.values[m][h][s]
    }

    /// `Q^{pi,lambda}_{m,h}(s,a)` at a local state.
    pub fn q_value(&self, m: usize, h: usize, s: usize, a: Action) -> f64 {
        let c = &self.model.components()[m];
        let g = c.states[s];
        if h == 0 || self.model.is_terminal(g) {
            return 0.0;
        }
        let next: f64 = c.transitions[s][a.index()]
            .iter()
            .map(|t| t.prob * (t.reward + self.values[m][h - 1][t.next]))
            .sum();
        next + self.lambda * neg_log(self.probs[g][a.index()])
    }

    pub fn advantage(&self, m: usize, h: usize, s: usize, a: Action) -> f64 {
        let c = &self.model.components()[m];
        if h == 0 || self.model.is_terminal(c.states[s]) {
            return 0.0;
        }
        self.q_value(m, h, s, a) - self.values[m][h][s]
    }

    /// Advantage looked up by observation in component `m`.
    pub fn advantage_at(&self, m: usize, h: usize, obs: &[f64], a: Action) -> Result<f64> {
        if h > self.model.horizon() {
            return Err(Error::InvalidConfig(format!("steps remaining {h} exceed horizon")));
        }
        let g = self
            .model
            .observation_index(obs)
            .ok_or_else(|| Error::InvalidConfig("observation not in model".into()))?;
        let s = self
            .model
            .local_index(m, g)
            .ok_or_else(|| Error::InvalidConfig(format!("observation not reachable in component {m}")))?;
        Ok(self.advantage(m, h, s, a))
    }

    /// `E[A_{m,h}(s,a) | s observed at step H-h]` averaged over the posterior of
    /// the hidden component under `sampler`'s visitation.
    pub fn conditional_advantage(&self, sampler: &dyn Policy, step: usize, obs: &[f64], a: Action) -> Result<f64> {
        let g = self
            .model
            .observation_index(obs)
            .ok_or_else(|| Error::InvalidConfig("observation not in model".into()))?;
        let d = self.model.visitation(sampler)?;
        let horizon = self.model.horizon();
        let (mut num, mut den) = (0.0, 0.0);
        for (m, c) in self.model.components().iter().enumerate() {
            if let Some(s) = self.model.local_index(m, g) {
                let p = c.weight * d[m][step][s];
                num += p * self.advantage(m, horizon - step, s, a);
                den += p;
            }
        }
        if den == 0.0 {
            return Err(Error::InvalidConfig("observation has zero visitation".into()));
        }
        Ok(num / den)
    }

    pub fn probs(&self, global: usize) -> [f64; 2] {
        self.probs[global]
    }
}
