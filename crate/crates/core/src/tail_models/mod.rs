//! Step laws on `Z^d`: closed-form marginals, dependent-norm laws,
//! tabulated and deterministic steps, and audits of their tail behavior.

mod audit;
mod dependent;
mod law;
mod marginal;
mod parse;
mod slowly;

pub use audit::{
    h_function_audit, check_assumptions, h_function, marginal_asymptotics_check,
    HFunctionReport, HFunction, MarginalAsymptotics, TailCheck,
};
pub use dependent::DependentNorm;
pub use law::{Family, LatticeLaw, TabulatedLaw};
pub use marginal::{Marginal1d, MarginalTailSpec};
pub use parse::parse_law;
pub use slowly::SlowlyVarying;

use crate::error::Result;

/// Normalizer `c0` of a dependent-norm law and its relative error bound.
pub fn normalizing_constant(
    betas: &[f64],
    beta: f64,
    psi: &SlowlyVarying,
    tol: f64,
) -> Result<(f64, f64)> {
    let law = DependentNorm::new(betas.to_vec(), beta, psi.clone(), tol)?;
    Ok((law.c0(), law.c0_rel_error() * law.c0()))
}
