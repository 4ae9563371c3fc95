//! Latent gradient-process models, the noisy gradient streams they generate,
//! and the filters that estimate the current gradient from the stream.
//!
//! Two models are provided: the martingale mini-batch model, whose filter is a
//! constant rescaling of the latest observation, and the linear state-space
//! model, filtered by discrete, continuous (Kalman-Bucy) or steady-state
//! Kalman recursions.

mod kalman;
mod martingale;
mod state_space;

pub use kalman::{kalman_bucy_step, kalman_discrete_step, kalman_steady_gain, KalmanState};
pub use martingale::{martingale_filter, MartingaleGradientModel, MartingaleStream};
pub use state_space::{
    stationary_covariance, ContinuousStateSpaceStream, DiscreteStateSpace, StateSpaceGradientModel, StateSpaceStream,
};
