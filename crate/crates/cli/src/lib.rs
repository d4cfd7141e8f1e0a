//! Experiment orchestration for the `lmdp-npg` binary: JSON configs,
//! versioned CSV logs, checkpoints, SVG plots and the subcommands.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod csv;
pub mod plot;

pub use commands::{analyze_kappa, cmd_plot, cmd_run, oracle_report, KappaArgs, KappaMode, RunArgs, SamplerChoice};
pub use config::ExperimentConfig;
