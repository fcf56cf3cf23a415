//! Reproducible Monte Carlo for walks: exact step samplers, Green-function
//! hit counts, capped tail probabilities and rescaled endpoints.

mod philox;
mod sampler;
mod walks;

pub use philox::{philox4x32, PhiloxRng, StreamSpec};
pub use sampler::{AliasTable, HybridSampler, StepSampler, ALIAS_HEAD, SATURATION};
pub use walks::*;
