use std::collections::{HashMap, VecDeque};

use rand::{Rng, SeedableRng};

use super::{Action, Environment, Episode};
use crate::rng::StreamRng;
use crate::{Error, Result};

/// Default limit on enumerated `states x horizon` for exact evaluation.
pub const DEFAULT_STATE_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    /// Local state index inside the component.
    pub next: usize,
    pub prob: f64,
    pub reward: f64,
}

/// One MDP of the mixture, over its own (local) state indices.
#[derive(Debug, Clone)]
pub struct TabularComponent {
    pub weight: f64,
    /// Local state index -> global observation index.
    pub states: Vec<usize>,
    /// Initial distribution over local states.
    pub initial: Vec<(usize, f64)>,
    /// Indexed by local state, then by [`Action::index`]. Empty for terminal states.
    pub transitions: Vec<[Vec<Transition>; 2]>,
}

/// Exact finite model of a latent MDP.
///
/// Observations are shared across components: policies only see the global
/// observation table, while each component keeps its own Markov state graph.
#[derive(Debug, Clone)]
pub struct TabularLmdp {
    horizon: usize,
    observations: Vec<Vec<f64>>,
    terminal: Vec<bool>,
    components: Vec<TabularComponent>,
}

fn obs_key(obs: &[f64], terminal: bool) -> (Vec<u64>, bool) {
    (obs.iter().map(|x| x.to_bits()).collect(), terminal)
}

#[derive(Default)]
struct ObservationTable {
    observations: Vec<Vec<f64>>,
    terminal: Vec<bool>,
    index: HashMap<(Vec<u64>, bool), usize>,
}

impl ObservationTable {
    fn intern(&mut self, obs: Vec<f64>, terminal: bool) -> usize {
        let key = obs_key(&obs, terminal);
        if let Some(&i) = self.index.get(&key) {
            return i;
        }
        let i = self.observations.len();
        self.observations.push(obs);
        self.terminal.push(terminal);
        self.index.insert(key, i);
        i
    }
}

impl TabularLmdp {
    /// Builds a model by enumerating the reachable state graph of each
    /// component under both actions. Components must be deterministic given
    /// their initial episode.
    pub fn from_episodes<Ep: Episode>(horizon: usize, components: Vec<(f64, Ep)>, cap: usize) -> Result<Self> {
        let mut table = ObservationTable::default();
        let mut out = Vec::with_capacity(components.len());
        let mut total_states = 0usize;

        for (weight, start) in components {
            let mut local: HashMap<(Vec<u64>, bool), usize> = HashMap::new();
            let mut episodes: Vec<Ep> = Vec::new();
            let mut states = Vec::new();
            let mut transitions: Vec<[Vec<Transition>; 2]> = Vec::new();
            let mut queue = VecDeque::new();

            let mut visit = |ep: Ep,
                             episodes: &mut Vec<Ep>,
                             states: &mut Vec<usize>,
                             transitions: &mut Vec<[Vec<Transition>; 2]>,
                             queue: &mut VecDeque<usize>,
                             total: &mut usize|
             -> Result<usize> {
                let obs = ep.observation();
                let term = ep.is_terminal();
                let key = obs_key(&obs, term);
                if let Some(&i) = local.get(&key) {
                    return Ok(i);
                }
                *total += 1;
                let required = total.saturating_mul(horizon.max(1));
                if required > cap {
                    return Err(Error::InstanceTooLarge { required, cap });
                }
                let i = episodes.len();
                local.insert(key, i);
                states.push(table.intern(obs, term));
                transitions.push([Vec::new(), Vec::new()]);
                episodes.push(ep);
                queue.push_back(i);
                Ok(i)
            };

            let s0 = visit(
                start,
                &mut episodes,
                &mut states,
                &mut transitions,
                &mut queue,
                &mut total_states,
            )?;
            while let Some(s) = queue.pop_front() {
                if episodes[s].is_terminal() {
                    continue;
                }
                for a in Action::ALL {
                    let mut next = episodes[s].clone();
                    let reward = next.step(a);
                    let j = visit(
                        next,
                        &mut episodes,
                        &mut states,
                        &mut transitions,
                        &mut queue,
                        &mut total_states,
                    )?;
                    transitions[s][a.index()] = vec![Transition {
                        next: j,
                        prob: 1.0,
                        reward,
                    }];
                }
            }
            out.push(TabularComponent {
                weight,
                states,
                initial: vec![(s0, 1.0)],
                transitions,
            });
        }
        Self::new(horizon, table.observations, table.terminal, out)
    }

    /// Assembles and validates a model from explicit parts.
    pub fn new(
        horizon: usize,
        observations: Vec<Vec<f64>>,
        terminal: Vec<bool>,
        components: Vec<TabularComponent>,
    ) -> Result<Self> {
        if observations.len() != terminal.len() {
            return Err(Error::InvalidConfig("observation/terminal length mismatch".into()));
        }
        if components.is_empty() {
            return Err(Error::InvalidConfig("latent MDP needs at least one component".into()));
        }
        let wsum: f64 = components.iter().map(|c| c.weight).sum();
        if components.iter().any(|c| !(c.weight > 0.0)) || (wsum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "component weights must be positive and sum to 1 (sum = {wsum})"
            )));
        }
        for c in &components {
            if c.states.len() != c.transitions.len() {
                return Err(Error::InvalidConfig("component state/transition mismatch".into()));
            }
            if c.states.iter().any(|&g| g >= observations.len()) {
                return Err(Error::InvalidConfig("component references unknown observation".into()));
            }
            for (s, trans) in c.transitions.iter().enumerate() {
                let term = terminal[c.states[s]];
                for list in trans {
                    if term && !list.is_empty() {
                        return Err(Error::InvalidConfig("terminal state with transitions".into()));
                    }
                    if !term {
                        let p: f64 = list.iter().map(|t| t.prob).sum();
                        if (p - 1.0).abs() > 1e-12 {
                            return Err(Error::InvalidConfig(format!("transition probabilities sum to {p}")));
                        }
                    }
                    if list.iter().any(|t| !(0.0..=1.0).contains(&t.reward)) {
                        return Err(Error::InvalidConfig("rewards must lie in [0, 1]".into()));
                    }
                }
            }
        }
        Ok(Self {
            horizon,
            observations,
            terminal,
            components,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn observations(&self) -> &[Vec<f64>] {
        &self.observations
    }

    pub fn is_terminal(&self, global: usize) -> bool {
        self.terminal[global]
    }

    pub fn components(&self) -> &[TabularComponent] {
        &self.components
    }

    /// Non-terminal observations, in table order.
    pub fn decision_observations(&self) -> Vec<Vec<f64>> {
        self.observations
            .iter()
            .zip(&self.terminal)
            .filter(|(_, &t)| !t)
            .map(|(o, _)| o.clone())
            .collect()
    }

    /// Global index of an observation, if present.
    pub fn observation_index(&self, obs: &[f64]) -> Option<usize> {
        self.observations.iter().zip(&self.terminal).position(|(o, &t)| {
            !t && o.len() == obs.len() && o.iter().zip(obs).all(|(a, b)| a.to_bits() == b.to_bits())
        })
    }

    /// Local index of a global observation inside component `m`.
    pub fn local_index(&self, m: usize, global: usize) -> Option<usize> {
        self.components[m].states.iter().position(|&g| g == global)
    }

    /// Random model for property tests: `n_states` decision states plus one
    /// terminal state, stochastic transitions, rewards in `[0, 1]`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n_components: usize, n_states: usize, horizon: usize) -> Self {
        let mut observations: Vec<Vec<f64>> = (0..n_states)
            .map(|s| vec![(s + 1) as f64 / n_states as f64, rng.gen::<f64>()])
            .collect();
        observations.push(vec![0.0, 0.0]);
        let mut terminal = vec![false; n_states];
        terminal.push(true);
        let term = n_states;

        let raw: Vec<f64> = (0..n_components).map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let head: f64 = weights[..n_components - 1].iter().sum();
        weights[n_components - 1] = 1.0 - head;

        let components = weights
            .into_iter()
            .map(|weight| {
                let states: Vec<usize> = (0..=n_states).collect();
                let mut initial = Vec::new();
                let k = rng.gen_range(1..=n_states.min(3));
                let mut mass = 1.0;
                for i in 0..k {
                    let s = rng.gen_range(0..n_states);
                    let p = if i + 1 == k {
                        mass
                    } else {
                        mass * rng.gen_range(0.2..0.8)
                    };
                    mass -= p;
                    initial.push((s, p));
                }
                let transitions = (0..=n_states)
                    .map(|s| {
                        if s == term {
                            return [Vec::new(), Vec::new()];
                        }
                        let mut per_action = [Vec::new(), Vec::new()];
                        for list in per_action.iter_mut() {
                            let k = rng.gen_range(1..=2);
                            let mut mass = 1.0;
                            for i in 0..k {
                                let next = rng.gen_range(0..=n_states);
                                let p = if i + 1 == k {
                                    mass
                                } else {
                                    mass * rng.gen_range(0.2..0.8)
                                };
                                mass -= p;
                                let reward = if rng.gen_bool(0.5) { rng.gen::<f64>() } else { 0.0 };
                                list.push(Transition { next, prob: p, reward });
                            }
                        }
                        per_action
                    })
                    .collect();
                TabularComponent {
                    weight,
                    states,
                    initial,
                    transitions,
                }
            })
            .collect();
        Self::new(horizon, observations, terminal, components).expect("random model is valid")
    }

    fn sample_index<R: Rng + ?Sized>(rng: &mut R, probs: impl Iterator<Item = f64>) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, p) in probs.enumerate() {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
        last
    }
}

/// Simulated episode of a [`TabularLmdp`].
#[derive(Clone)]
pub struct TabularEpisode<'a> {
    model: &'a TabularLmdp,
    component: usize,
    state: usize,
    rng: StreamRng,
}

impl Episode for TabularEpisode<'_> {
    fn observation(&self) -> Vec<f64> {
        let g = self.model.components[self.component].states[self.state];
        self.model.observations[g].clone()
    }

    fn is_terminal(&self) -> bool {
        let g = self.model.components[self.component].states[self.state];
        self.model.terminal[g]
    }

    fn step(&mut self, action: Action) -> f64 {
        if self.is_terminal() {
            return 0.0;
        }
        let list = &self.model.components[self.component].transitions[self.state][action.index()];
        let i = TabularLmdp::sample_index(&mut self.rng, list.iter().map(|t| t.prob));
        self.state = list[i].next;
        list[i].reward
    }

    fn component(&self) -> Option<usize> {
        Some(self.component)
    }
}

impl Environment for TabularLmdp {
    type Episode<'e> = TabularEpisode<'e>;

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn observation_dim(&self) -> usize {
        self.observations.first().map_or(0, Vec::len)
    }

    fn reset<'e, R: Rng + ?Sized>(&'e self, rng: &mut R) -> TabularEpisode<'e> {
        let m = Self::sample_index(rng, self.components.iter().map(|c| c.weight));
        let c = &self.components[m];
        let i = Self::sample_index(rng, c.initial.iter().map(|x| x.1));
        TabularEpisode {
            model: self,
            component: m,
            state: c.initial[i].0,
            rng: StreamRng::seed_from_u64(rng.gen()),
        }
    }

    fn tabular(&self, _cap: usize) -> Result<TabularLmdp> {
        Ok(self.clone())
    }
}
