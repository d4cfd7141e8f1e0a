//! Latent MDP abstraction.
//!
//! An LMDP is a mixture of MDP components sharing states, actions and a
//! horizon. A component is drawn once per episode and is hidden from the
//! agent, which only observes encoded states.
//!
//! Environments are simulated through [`Environment`] / [`Episode`]. Small
//! instances can be turned into a [`TabularLmdp`], on which every quantity is
//! computed exactly.

mod exact;
mod mc;
mod tabular;

pub use exact::{entropy, ExactEvaluation, StateActionWeighting};
pub use mc::{evaluate_value_mc, run_episode, McEstimate};
pub use tabular::{TabularComponent, TabularEpisode, TabularLmdp, Transition, DEFAULT_STATE_CAP};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::Result;

/// Both environments are binary: accept or reject the current candidate/item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Accept,
    Reject,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Accept, Action::Reject];
    pub const COUNT: usize = 2;

    pub fn index(self) -> usize {
        match self {
            Action::Accept => 0,
            Action::Reject => 1,
        }
    }

    pub fn from_index(i: usize) -> Action {
        if i == 0 {
            Action::Accept
        } else {
            Action::Reject
        }
    }
}

/// One running episode of a sampled component.
///
/// `step` must be a pure function of the episode state and the action so that
/// cloning an episode and stepping both copies gives identical results.
pub trait Episode: Clone + Send {
    /// Encoded observation fed to feature maps. Terminal states encode as zeros.
    fn observation(&self) -> Vec<f64>;

    fn is_terminal(&self) -> bool;

    /// Applies `action` and returns the reward in `[0, 1]`. Stepping a
    /// terminal episode is a no-op with zero reward.
    fn step(&mut self, action: Action) -> f64;

    /// Index of the hidden component, when the environment enumerates them.
    fn component(&self) -> Option<usize> {
        None
    }
}

pub trait Environment: Send + Sync {
    type Episode<'e>: Episode
    where
        Self: 'e;

    fn horizon(&self) -> usize;

    fn observation_dim(&self) -> usize;

    /// Draws a component and returns its initial episode state.
    fn reset<'e, R: Rng + ?Sized>(&'e self, rng: &mut R) -> Self::Episode<'e>;

    /// Builds the exact tabular model, or fails when the instance exceeds
    /// `cap` state-steps or has continuous instance distributions.
    fn tabular(&self, cap: usize) -> Result<TabularLmdp>;
}

/// A single recorded episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<(Vec<f64>, Action, f64)>,
    pub component: Option<usize>,
}

impl Trajectory {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.2).sum()
    }
}
