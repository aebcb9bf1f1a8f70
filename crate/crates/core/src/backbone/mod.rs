//! The parallel-neuron model: `H` small deep MLPs on a `D x D` grid, a
//! binary routing mask over their scalar outputs, and one bias-free linear
//! readout.

pub mod bank;
pub mod forward;
pub mod grid;
pub mod mask;
pub mod train;

pub use bank::{BankTensors, InitGain, NeuronBank};
pub use forward::{active_set, sigmoid, ForwardCache, Gates, Gradients, Mode, Reduction};
pub use grid::{BankShape, GridSpec};
pub use mask::{parse_gates, Mask, Provenance};
pub use train::{compute_gradients, train_step, ModelOptimizer};
