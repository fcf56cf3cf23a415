//! Exact n-step distributions and Green functions by dense lattice
//! convolution with tracked truncation error.

mod convolve;
mod lattice;
mod sweep;

pub use convolve::{convolve, ConvMethod, StepConvolver};
pub use lattice::{LatticeBox, LatticeField, DEFAULT_VOLUME_CAP};
pub use sweep::*;
