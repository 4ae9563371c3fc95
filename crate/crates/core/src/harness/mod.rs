//! Experiment orchestration: problem generation, configuration, seeded runs,
//! sweeps and output files.

pub mod config;
pub mod experiment;
pub mod problem;

pub use config::{ExperimentConfig, RawConfig};
pub use experiment::{compare, run_experiment, sweep, ExperimentSummary};
pub use problem::{generate_problem, sample_minibatch_gradient, ProblemInstance, ProblemKind};
