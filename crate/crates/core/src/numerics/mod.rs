//! Numerical building blocks shared by the model, engine and bench layers.

pub mod quad;
pub mod root;
pub mod stats;
pub mod zeta;
