use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::optimal_threshold_from_series;
use crate::lmdp::{Action, Environment, Episode, TabularComponent, TabularLmdp, Transition};
use crate::policy::Policy;
use crate::rng::{label, stream};
use crate::{Error, Result};

const SP_STREAM: u64 = 0x5350;

/// Secretary Problem instance distribution: `x_i ~ Bernoulli(P_i)` independently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpConfig {
    pub n: usize,
    /// `P_1..P_n`; `P_1 = 1`.
    pub p_series: Vec<f64>,
    pub seed: u64,
    pub classical: bool,
}

impl SpConfig {
    /// `P_i = 1/i`.
    pub fn classical(n: usize) -> Result<Self> {
        let p_series = (1..=n).map(|i| 1.0 / i as f64).collect();
        Ok(Self {
            classical: true,
            ..Self::from_series(p_series)?
        })
    }

    pub fn from_series(p_series: Vec<f64>) -> Result<Self> {
        let n = p_series.len();
        if n == 0 {
            return Err(Error::InvalidConfig("SP needs n >= 1".into()));
        }
        if p_series[0] != 1.0 {
            return Err(Error::InvalidConfig("P_1 must equal 1".into()));
        }
        if p_series.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
            return Err(Error::InvalidConfig("P_i must lie in (0, 1]".into()));
        }
        Ok(Self {
            n,
            p_series,
            seed: 0,
            classical: false,
        })
    }

    /// `P_i` with 1-based index.
    pub fn p(&self, i: usize) -> f64 {
        self.p_series[i - 1]
    }

    /// Probability that index `i` (1-based, with `x_i = 1`) is the global best:
    /// `prod_{j > i} (1 - P_j)`.
    pub fn win_probability(&self, i: usize) -> f64 {
        self.p_series[i..].iter().map(|p| 1.0 - p).product()
    }
}

/// Seeded series `P_i = i^{-(2 p_i + 0.25)}` with `p_i ~ Unif[0, 1]`, `P_1 = 1`.
pub fn sp_generate_distribution(n: usize, seed: u64) -> Result<SpConfig> {
    if n == 0 {
        return Err(Error::InvalidConfig("SP needs n >= 1".into()));
    }
    let mut rng = stream(seed, &[label::ENV_DIST, SP_STREAM]);
    let mut p_series = vec![1.0];
    for i in 2..=n {
        let u: f64 = rng.gen();
        p_series.push((i as f64).powf(-(2.0 * u + 0.25)));
    }
    Ok(SpConfig {
        seed,
        ..SpConfig::from_series(p_series)?
    })
}

#[derive(Debug, Clone)]
pub struct SpEnv {
    config: SpConfig,
}

impl SpEnv {
    pub fn new(config: SpConfig) -> Self {
        Self { config }
    }

    pub fn config(&self) -> &SpConfig {
        &self.config
    }

    pub fn n(&self) -> usize {
        self.config.n
    }

    fn fraction(&self, i: usize) -> f64 {
        i as f64 / self.config.n as f64
    }

    /// Episode for a fixed best-so-far pattern (`x[0]` must be true).
    pub fn episode_for(&self, x: Vec<bool>) -> SpEpisode<'_> {
        assert_eq!(x.len(), self.config.n, "instance length must equal n");
        let best = x.iter().rposition(|&b| b).unwrap_or(0);
        SpEpisode {
            env: self,
            x,
            best,
            pos: 0,
            terminal: false,
        }
    }

    /// Single-component model over states `(i, x)` where accepting at
    /// `(i, 1)` pays 1 with probability `prod_{j>i}(1 - P_j)`. Equivalent to
    /// the instance mixture for every observation-based policy.
    pub fn collapsed_tabular(&self) -> Result<TabularLmdp> {
        let n = self.config.n;
        let mut observations = vec![vec![0.0, 0.0]];
        let mut terminal = vec![true];
        // local index of (i, x) or None when unreachable
        let mut index = vec![[None, None]; n + 1];
        for i in 1..=n {
            let p = self.config.p(i);
            for (x, reachable) in [(0usize, p < 1.0), (1usize, p > 0.0)] {
                if reachable {
                    index[i][x] = Some(observations.len());
                    observations.push(vec![self.fraction(i), x as f64]);
                    terminal.push(false);
                }
            }
        }
        let mut transitions: Vec<[Vec<Transition>; 2]> = vec![[Vec::new(), Vec::new()]; observations.len()];
        for i in 1..=n {
            for x in 0..2 {
                let Some(s) = index[i][x] else { continue };
                let win = if x == 1 { self.config.win_probability(i) } else { 0.0 };
                let mut accept = Vec::new();
                if win > 0.0 {
                    accept.push(Transition {
                        next: 0,
                        prob: win,
                        reward: 1.0,
                    });
                }
                if win < 1.0 {
                    accept.push(Transition {
                        next: 0,
                        prob: 1.0 - win,
                        reward: 0.0,
                    });
                }
                let mut reject = Vec::new();
                if i == n {
                    reject.push(Transition {
                        next: 0,
                        prob: 1.0,
                        reward: 0.0,
                    });
                } else {
                    let p = self.config.p(i + 1);
                    if let Some(t) = index[i + 1][1] {
                        reject.push(Transition {
                            next: t,
                            prob: p,
                            reward: 0.0,
                        });
                    }
                    if let Some(t) = index[i + 1][0] {
                        reject.push(Transition {
                            next: t,
                            prob: 1.0 - p,
                            reward: 0.0,
                        });
                    }
                }
                transitions[s] = [accept, reject];
            }
        }
        let component = TabularComponent {
            weight: 1.0,
            states: (0..observations.len()).collect(),
            initial: vec![(index[1][1].expect("P_1 = 1"), 1.0)],
            transitions,
        };
        TabularLmdp::new(n, observations, terminal, vec![component])
    }

    /// Number of distinct instances with positive probability.
    fn instance_count(&self) -> Option<usize> {
        self.config.p_series[1..]
            .iter()
            .try_fold(1usize, |acc, &p| if p < 1.0 { acc.checked_mul(2) } else { Some(acc) })
    }
}

#[derive(Clone)]
pub struct SpEpisode<'e> {
    env: &'e SpEnv,
    x: Vec<bool>,
    best: usize,
    pos: usize,
    terminal: bool,
}

impl SpEpisode<'_> {
    pub fn instance(&self) -> &[bool] {
        &self.x
    }
}

impl Episode for SpEpisode<'_> {
    fn observation(&self) -> Vec<f64> {
        if self.terminal {
            vec![0.0, 0.0]
        } else {
            vec![
                self.env.fraction(self.pos + 1),
                if self.x[self.pos] { 1.0 } else { 0.0 },
            ]
        }
    }

    fn is_terminal(&self) -> bool {
        self.terminal
    }

    fn step(&mut self, action: Action) -> f64 {
        if self.terminal {
            return 0.0;
        }
        match action {
            Action::Accept => {
                self.terminal = true;
                if self.x[self.pos] && self.pos == self.best {
                    1.0
                } else {
                    0.0
                }
            }
            Action::Reject => {
                self.pos += 1;
                if self.pos == self.env.n() {
                    self.terminal = true;
                }
                0.0
            }
        }
    }
}

impl Environment for SpEnv {
    type Episode<'e> = SpEpisode<'e>;

    fn horizon(&self) -> usize {
        self.config.n
    }

    fn observation_dim(&self) -> usize {
        2
    }

    fn reset<'e, R: Rng + ?Sized>(&'e self, rng: &mut R) -> SpEpisode<'e> {
        let x = self.config.p_series.iter().map(|&p| rng.gen::<f64>() < p).collect();
        self.episode_for(x)
    }

    /// Explicit mixture over all `2^(n-1)` best-so-far patterns.
    fn tabular(&self, cap: usize) -> Result<TabularLmdp> {
        let n = self.config.n;
        let required = self
            .instance_count()
            .and_then(|c| c.checked_mul(n + 1))
            .and_then(|c| c.checked_mul(n))
            .unwrap_or(usize::MAX);
        if required > cap {
            return Err(Error::InstanceTooLarge { required, cap });
        }
        let mut instances: Vec<(f64, Vec<bool>)> = vec![(1.0, vec![true])];
        for &p in &self.config.p_series[1..] {
            let mut next = Vec::with_capacity(instances.len() * 2);
            for (w, x) in instances {
                if p > 0.0 {
                    let mut y = x.clone();
                    y.push(true);
                    next.push((w * p, y));
                }
                if p < 1.0 {
                    let mut y = x;
                    y.push(false);
                    next.push((w * (1.0 - p), y));
                }
            }
            instances = next;
        }
        let total: f64 = instances.iter().map(|c| c.0).sum();
        let components = instances
            .into_iter()
            .map(|(w, x)| (w / total, self.episode_for(x)))
            .collect();
        TabularLmdp::from_episodes(n, components, cap)
    }
}

/// Result of the backward DP for the Secretary Problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SpDpSolution {
    /// `accept_at[i - 1]`: accept at `(i, x = 1)`.
    pub accept_at: Vec<bool>,
    pub value: f64,
    /// `Some(k)` when the policy accepts exactly at `i > k`.
    pub threshold: Option<usize>,
    /// Threshold from the summation characterization, when it applies.
    pub formula_threshold: Option<usize>,
    /// Accept-values `A(i)`.
    pub accept_value: Vec<f64>,
    /// Continue-values `U(i)`.
    pub continue_value: Vec<f64>,
}

impl SpDpSolution {
    pub fn policy(&self) -> SpIndexPolicy {
        SpIndexPolicy::new(self.accept_at.clone())
    }

    /// Agreement between the DP threshold and the summation characterization,
    /// or `None` when the latter does not apply.
    pub fn formula_agrees(&self) -> Option<bool> {
        self.formula_threshold.map(|k| self.threshold == Some(k))
    }
}

pub fn sp_optimal_policy_dp(config: &SpConfig) -> SpDpSolution {
    let n = config.n;
    let mut a = vec![0.0; n + 1];
    let mut u = vec![0.0; n + 1];
    a[n] = 1.0;
    for i in (1..n).rev() {
        a[i] = a[i + 1] * (1.0 - config.p(i + 1));
        let p = config.p(i + 1);
        u[i] = p * a[i + 1].max(u[i + 1]) + (1.0 - p) * u[i + 1];
    }
    let accept_at: Vec<bool> = (1..=n).map(|i| a[i] >= u[i]).collect();
    let value = config.p(1) * a[1].max(u[1]) + (1.0 - config.p(1)) * u[1];
    let k = accept_at.iter().take_while(|&&b| !b).count();
    let threshold = accept_at[k..].iter().all(|&b| b).then_some(k);
    let formula_threshold = optimal_threshold_from_series(&config.p_series).ok();
    if let (Some(t), Some(f)) = (threshold, formula_threshold) {
        if t != f {
            log::warn!("DP threshold {t} differs from summation threshold {f}");
        }
    }
    SpDpSolution {
        accept_at,
        value,
        threshold,
        formula_threshold,
        accept_value: a[1..].to_vec(),
        continue_value: u[1..].to_vec(),
    }
}

/// Accepts at `(i, x = 1)` for a given set of indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpIndexPolicy {
    accept_at: Vec<bool>,
}

impl SpIndexPolicy {
    pub fn new(accept_at: Vec<bool>) -> Self {
        Self { accept_at }
    }

    pub fn accepts(&self, i: usize) -> bool {
        i >= 1 && i <= self.accept_at.len() && self.accept_at[i - 1]
    }
}

impl Policy for SpIndexPolicy {
    fn action_probs(&self, obs: &[f64]) -> Result<[f64; 2]> {
        let n = self.accept_at.len() as f64;
        let i = (obs[0] * n).round() as usize;
        Ok(if obs[1] > 0.5 && self.accepts(i) {
            [1.0, 0.0]
        } else {
            [0.0, 1.0]
        })
    }

    fn describe(&self) -> String {
        let idx: Vec<String> = (1..=self.accept_at.len())
            .filter(|&i| self.accepts(i))
            .map(|i| i.to_string())
            .collect();
        format!("sp-index(accept x=1 at {{{}}})", idx.join(","))
    }
}

/// Accepts iff `i/n > p` and `x = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub threshold: f64,
}

impl ThresholdPolicy {
    pub fn new(threshold: f64) -> Self {
        Self { threshold }
    }
}

impl Policy for ThresholdPolicy {
    fn action_probs(&self, obs: &[f64]) -> Result<[f64; 2]> {
        Ok(if obs[0] > self.threshold && obs[1] > 0.5 {
            [1.0, 0.0]
        } else {
            [0.0, 1.0]
        })
    }

    fn describe(&self) -> String {
        format!("threshold(p={})", self.threshold)
    }
}
