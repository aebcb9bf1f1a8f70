//! Deterministic numerical kernels shared by the rest of the crate.

pub mod activation;
pub mod adam;
pub mod loss;
pub mod rng;

pub use adam::{AdamState, MODEL_LR};
pub use loss::{argmax, loss_and_grad, LossKind, Targets};
pub use rng::{RngStream, StreamId};
