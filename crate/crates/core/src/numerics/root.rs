//! Bracketing root finders for monotone functions.

use crate::error::{Error, Result};

/// Smallest `x` in `[lo, hi]` (to relative precision `rel_tol`) with
/// `pred(x)` true, assuming `pred` is monotone false-then-true.
pub fn bisect_predicate<P: Fn(f64) -> bool>(
    pred: P,
    mut lo: f64,
    mut hi: f64,
    rel_tol: f64,
) -> Result<f64> {
    if !pred(hi) {
        return Err(Error::Overflow(format!("no crossing below {hi:e}")));
    }
    if pred(lo) {
        return Ok(lo);
    }
    for _ in 0..400 {
        if hi - lo <= rel_tol * hi.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        // Geometric midpoint while the bracket spans orders of magnitude.
        let mid = if lo > 0.0 && hi / lo > 4.0 {
            (lo * hi).sqrt()
        } else {
            0.5 * (lo + hi)
        };
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Root of an increasing function `f(x) = target` on `[lo, hi]`.
pub fn solve_increasing<F: Fn(f64) -> f64>(
    f: F,
    target: f64,
    lo: f64,
    hi: f64,
    rel_tol: f64,
) -> Result<f64> {
    bisect_predicate(|x| f(x) >= target, lo, hi, rel_tol)
}
