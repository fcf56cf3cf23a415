//! Exact and Monte Carlo computation of Green's functions and local
//! probabilities for multivariate heavy-tailed lattice random walks, with
//! numerical checks of strong renewal and local large deviation bounds.

pub mod error;
pub mod exact_engine;
pub mod mc_engine;
pub mod numerics;
pub mod scaling;
pub mod stable_limit;
pub mod tail_models;
pub mod theorem_bench;

pub use error::{Error, Result};
