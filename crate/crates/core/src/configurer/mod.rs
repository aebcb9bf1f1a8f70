//! Mask configuration: gradient proposal on relaxed mask logits, toroidal
//! lateral smoothing, and k-winner-take-all binarization.

pub mod configure;
pub mod kwta;
pub mod smooth;
pub mod spec;

pub use configure::{configure_mask, finish_mask, propose_logits, static_mask, Proposal};
pub use kwta::kwta;
pub use smooth::{lateral_smooth, mean_pairwise_distance, torus_distance, torus_shift};
pub use spec::{ConfigurerSpec, Schedule, Variant};
