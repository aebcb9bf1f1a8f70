//! Functional task networks: a bank of independent per-neuron MLPs on a
//! toroidal grid, routed by binary masks that a smoothed k-winner-take-all
//! configurer installs during training and recovers at evaluation time.

pub mod backbone;
pub mod baselines;
pub mod config;
pub mod configurer;
pub mod error;
pub mod numcore;
pub mod parallel;
pub mod protocol;
pub mod tasks;

pub use error::{FtnError, Result};
