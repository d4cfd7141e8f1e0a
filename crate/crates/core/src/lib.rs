//! Natural policy gradient for online combinatorial optimization posed as
//! latent MDPs.
//!
//! The crate is organized bottom-up:
//!
//! - [`lmdp`]: the latent-MDP abstraction, episode simulation, exact tabular
//!   evaluation (values, advantages, visitation, policy gradient, Fisher
//!   matrices) and Monte Carlo evaluation.
//! - [`envs`]: Secretary Problem and Online Knapsack (decision version)
//!   environments with their seeded instance distributions and reference
//!   policies.
//! - [`policy`]: log-linear policies over polynomial or one-hot features.
//! - [`trainer`]: the unbiased advantage sampler, Fisher/gradient
//!   estimation, the ball-constrained quadratic solver and the NPG loop.
//! - [`curriculum`]: the two-phase curriculum framework and the training
//!   scheme matrix.
//! - [`analysis`]: relative condition numbers, fitting errors and threshold
//!   characterizations.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Step-indexed recursions read more clearly with explicit indices.
#![allow(clippy::needless_range_loop)]

pub mod analysis;
pub mod curriculum;
pub mod envs;
mod error;
pub mod lmdp;
pub mod policy;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};

pub use analysis::KappaReport;
pub use curriculum::{run_scheme, CurriculumConfig, SchemeOutcome, TrainingScheme};
pub use envs::{AnyEnv, EnvConfig, EnvKind, OkdEnv, SpEnv};
pub use lmdp::{Action, Environment, Episode, TabularLmdp};
pub use policy::{FeatureMap, LogLinearPolicy, Policy};
pub use trainer::{npg_train, Sampler, TrainConfig, TrainLog, TrainOutcome};

/// Sizes the global worker pool. Results never depend on the worker count;
/// only wall-clock time does. Call once, before any parallel work.
pub fn configure_workers(threads: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))
}
