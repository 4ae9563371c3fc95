//! Stochastic optimizers derived from a variational view of optimization:
//! mirror descent and SGD with deterministic learning-rate paths, Kalman
//! gradient descent, generalized momentum, the gradient filters behind them,
//! and diagnostics for the energy and rate-of-convergence claims.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the aliases
//! at the crate root fix the scalar to `f64`, which is what the experiment
//! harness and the CLI use.

pub mod bregman;
pub mod diagnostics;
pub mod error;
pub mod gradient_models;
pub mod harness;
pub mod linalg;
pub mod optimizers;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod schedules;
pub mod selftest;

pub use error::{Error, Result};
pub use scalar::Real;

pub type MirrorMapF64 = bregman::MirrorMap<f64>;
pub type MirrorMapF32 = bregman::MirrorMap<f32>;
pub type ScheduleF64 = schedules::Schedule<f64>;
pub type ScheduleF32 = schedules::Schedule<f32>;
pub type LearningRatePathF64 = schedules::LearningRatePath<f64>;
pub type VectorLearningRatePathF64 = schedules::VectorLearningRatePath<f64>;
pub type KalmanStateF64 = gradient_models::KalmanState<f64>;
pub type MartingaleGradientModelF64 = gradient_models::MartingaleGradientModel<f64>;
pub type StateSpaceGradientModelF64 = gradient_models::StateSpaceGradientModel<f64>;
pub type TrajectoryF64 = diagnostics::Trajectory<f64>;
pub type ProblemInstanceF64 = harness::problem::ProblemInstance<f64>;
pub type OptimizerSpecF64 = optimizers::OptimizerSpec<f64>;
