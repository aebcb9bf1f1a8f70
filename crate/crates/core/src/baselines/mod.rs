//! Regularisation baselines that share the model but not the configurer.

pub mod ewc;

pub use ewc::{estimate_fisher, ewc_penalty_grad, EwcAnchor, DEFAULT_FISHER_BATCHES, DEFAULT_LAMBDA};
