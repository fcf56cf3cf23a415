//! Numerical audits of the tail assumptions: regular variation with a
//! power envelope, the cross-coordinate h-function condition, and the
//! marginal asymptotics of dependent-norm laws.

use serde::Serialize;

use super::law::{Family, LatticeLaw};
use crate::error::{invalid, Error, Result};

/// Per-coordinate check of the regularly varying tail and its envelope.
#[derive(Debug, Clone, Serialize)]
pub struct TailCheck {
    pub coordinate: usize,
    pub alpha: f64,
    pub gamma: f64,
    /// `max_x x^gamma P(|X| > x) / phi(x)` over the grid.
    pub envelope_sup: f64,
    /// `|2^alpha P(|X| > 2x) / P(|X| > x) - 1|` at the largest grid point
    /// (only for `alpha < 2`).
    pub doubling_error: Option<f64>,
    pub pass: bool,
}

/// Checks every coordinate over `x in {2^4, ..., 2^max_log2}`.
pub fn check_assumptions(law: &LatticeLaw, max_log2: u32) -> Vec<TailCheck> {
    (0..law.dim())
        .map(|i| {
            let spec = law.marginal_spec(i);
            let grid: Vec<f64> = (4..=max_log2).map(|k| 2f64.powi(k as i32)).collect();
            let envelope_sup = if spec.gamma.is_finite() {
                grid.iter()
                    .map(|&x| x.powf(spec.gamma) * law.two_sided_tail(i, x) / spec.phi.eval(x))
                    .fold(0.0, f64::max)
            } else {
                0.0
            };
            let doubling_error = (spec.alpha < 2.0).then(|| {
                let x = *grid.last().unwrap_or(&16.0);
                let r = law.two_sided_tail(i, 2.0 * x) / law.two_sided_tail(i, x);
                (r * 2f64.powf(spec.alpha) - 1.0).abs()
            });
            let pass = envelope_sup.is_finite() && doubling_error.is_none_or(|e| e < 0.05);
            TailCheck {
                coordinate: i,
                alpha: spec.alpha,
                gamma: spec.gamma,
                envelope_sup,
                doubling_error,
                pass,
            }
        })
        .collect()
}

/// Coupling function `h_u(v)` bounding the joint pmf given one large coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum HFunction {
    /// `(v/w) (1 + (v/w)^{b_other})^{-beta}` with `w = u^{b_own/b_other}`.
    DependentNorm { b_own: f64, b_other: f64, beta: f64 },
    /// `min(1, v^{-a})`, independent of `u`.
    PowerDecay { a: f64 },
}

impl HFunction {
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        match *self {
            HFunction::DependentNorm {
                b_own,
                b_other,
                beta,
            } => {
                let w = u.powf(b_own / b_other);
                let r = v / w;
                r * (1.0 + r.powf(b_other)).powf(-beta)
            }
            HFunction::PowerDecay { a } => {
                if v <= 1.0 {
                    1.0
                } else {
                    v.powf(-a)
                }
            }
        }
    }

    /// Bound on `sum_{v > vmax} h_u(v) / (1 + v)`.
    fn tail_bound(&self, u: f64, vmax: f64) -> f64 {
        match *self {
            HFunction::DependentNorm {
                b_own,
                b_other,
                beta,
            } => {
                // h <= (v/w)^{1 - beta b_other}
                let e = beta * b_other;
                let w = u.powf(b_own / b_other);
                w.powf(e - 1.0) * vmax.powf(1.0 - e) / (e - 1.0)
            }
            HFunction::PowerDecay { a } => vmax.powf(-a) / a,
        }
    }

    /// Natural scale in `v` at which `h_u` peaks or starts decaying.
    fn scale(&self, u: f64) -> f64 {
        match *self {
            HFunction::DependentNorm { b_own, b_other, .. } => u.powf(b_own / b_other),
            HFunction::PowerDecay { .. } => 1.0,
        }
    }
}

/// Outcome of the h-function audit for one coordinate.
#[derive(Debug, Clone, Serialize)]
pub struct HFunctionReport {
    pub coordinate: usize,
    pub h: HFunction,
    pub u_max: f64,
    /// (i): max of `h` over the grid.
    pub h_max: f64,
    /// (ii): sup over the `u` grid of the full sum, including the tail bound.
    pub sum_sup: f64,
    /// (ii) restricted to the top octave of `u`; growth there signals divergence.
    pub sum_sup_top_octave: f64,
    /// (iii): sup of `h_{u'}(v) / h_u(v)` for `u' in [u, 2u]`.
    pub doubling_sup: f64,
    pub doubling_sup_top_octave: f64,
    /// Max of `P(X^(i) = x) (1+x)^{1+gamma_i} / phi_i(x)` for `1 <= x <= marginal_max`.
    pub marginal_bound_ratio_max: f64,
    pub marginal_bound_ratio_top_octave: f64,
    pub pass: bool,
}

/// The h-function a law admits for coordinate `i`, if any.
pub fn h_function(law: &LatticeLaw, i: usize) -> Result<HFunction> {
    match law.family() {
        Family::DependentNorm(dn) => {
            if dn.dim() != 2 {
                return Err(Error::UnsupportedFamily(
                    "h-function is implemented for d = 2 dependent laws".into(),
                ));
            }
            let j = 1 - i;
            Ok(HFunction::DependentNorm {
                b_own: dn.betas()[i],
                b_other: dn.betas()[j],
                beta: dn.beta(),
            })
        }
        Family::IndependentProduct(_) => {
            let a = (0..law.dim())
                .filter(|&j| j != i)
                .map(|j| {
                    let g = law.marginal_spec(j).gamma;
                    if g.is_finite() {
                        g / 2.0
                    } else {
                        1.0
                    }
                })
                .fold(f64::INFINITY, f64::min);
            Ok(HFunction::PowerDecay {
                a: if a.is_finite() { a } else { 1.0 },
            })
        }
        _ => Err(Error::UnsupportedFamily(
            "law has no h-function representation".into(),
        )),
    }
}

fn u_grid(u_max: f64) -> Vec<f64> {
    let mut grid: Vec<f64> = (1..=256).map(f64::from).filter(|&u| u <= u_max).collect();
    let mut u = 256.0f64;
    while u < u_max {
        for k in 1..=16 {
            let v = (u * 2f64.powf(f64::from(k) / 16.0)).round();
            if v <= u_max {
                grid.push(v);
            }
        }
        u *= 2.0;
    }
    grid.dedup();
    grid
}

fn h_sum(h: &HFunction, u: f64) -> f64 {
    const DIRECT: u64 = 1 << 16;
    let vmax = (64.0 * h.scale(u)).max(1024.0);
    let g = |v: f64| h.eval(u, v) / (1.0 + v);
    let direct_end = (vmax as u64).min(DIRECT);
    let mut sum = 0.0;
    for v in 0..=direct_end {
        sum += g(v as f64);
    }
    if (direct_end as f64) < vmax {
        let (a, b) = ((direct_end + 1) as f64, vmax);
        let q = crate::numerics::quad::integrate(
            |t: f64| g(t.exp()) * t.exp(),
            a.ln(),
            b.ln(),
            0.0,
            1e-12,
        );
        sum += q.value + 0.5 * (g(a) + g(b));
    }
    sum + h.tail_bound(u, vmax)
}

/// Audits the h-function conditions on `u in [1, u_max]`, `v in [0, v_max]`,
/// and the implied one-dimensional bound on `1 <= x <= marginal_max`.
pub fn h_function_audit(
    law: &LatticeLaw,
    i: usize,
    u_max: f64,
    v_max: f64,
    marginal_max: u64,
) -> Result<HFunctionReport> {
    if i >= law.dim() {
        return Err(invalid(format!("coordinate {i} out of range")));
    }
    let h = h_function(law, i)?;
    let us = u_grid(u_max);
    let top = u_max / 2.0;
    let mut vs: Vec<f64> = (1..=1024).map(f64::from).collect();
    let mut v = 1024.0f64;
    while v < v_max {
        for k in 1..=8 {
            vs.push((v * 2f64.powf(f64::from(k) / 8.0)).round().min(v_max));
        }
        v *= 2.0;
    }
    vs.dedup();

    let mut h_max: f64 = 0.0;
    let (mut sum_sup, mut sum_top): (f64, f64) = (0.0, 0.0);
    let (mut dbl_sup, mut dbl_top): (f64, f64) = (0.0, 0.0);
    for &u in &us {
        let s = h_sum(&h, u);
        sum_sup = sum_sup.max(s);
        if u > top {
            sum_top = sum_top.max(s);
        }
        for &v in &vs {
            let base = h.eval(u, v);
            h_max = h_max.max(base);
            if base <= 0.0 {
                continue;
            }
            let mut worst: f64 = 1.0;
            for k in 1..=8 {
                let up = u * (1.0 + f64::from(k) / 8.0);
                worst = worst.max(h.eval(up, v) / base);
            }
            dbl_sup = dbl_sup.max(worst);
            if u > top {
                dbl_top = dbl_top.max(worst);
            }
        }
    }

    let spec = law.marginal_spec(i);
    let (mut bound_max, mut bound_top): (f64, f64) = (0.0, 0.0);
    for x in 1..=marginal_max {
        let xf = x as f64;
        let r =
            law.marginal_pmf(i, x as i64) * (1.0 + xf).powf(1.0 + spec.gamma) / spec.phi.eval(xf);
        bound_max = bound_max.max(r);
        if 2 * x > marginal_max {
            bound_top = bound_top.max(r);
        }
    }

    // No growth into the top octave: the sup is attained, not still rising.
    let pass = h_max <= 1.0 + 1e-12
        && sum_sup.is_finite()
        && sum_top <= sum_sup * (1.0 + 1e-9)
        && sum_top
            < 1.01
                * us.iter()
                    .filter(|&&u| u <= top)
                    .map(|&u| h_sum(&h, u))
                    .fold(0.0, f64::max)
                    .max(f64::MIN_POSITIVE)
        && dbl_sup.is_finite()
        && dbl_top <= dbl_sup
        && bound_max.is_finite()
        && bound_top <= bound_max * (1.0 + 1e-12);
    Ok(HFunctionReport {
        coordinate: i,
        h,
        u_max,
        h_max,
        sum_sup,
        sum_sup_top_octave: sum_top,
        doubling_sup: dbl_sup,
        doubling_sup_top_octave: dbl_top,
        marginal_bound_ratio_max: bound_max,
        marginal_bound_ratio_top_octave: bound_top,
        pass,
    })
}

/// Convergence of `P(X^(i) = x) / (psi(x^{beta_i}) x^{-(1+gamma_i)})`.
#[derive(Debug, Clone, Serialize)]
pub struct MarginalAsymptotics {
    pub coordinate: usize,
    pub grid: Vec<u64>,
    pub ratios: Vec<f64>,
    /// Ratio at the largest grid point.
    pub fitted_constant: f64,
    /// Limit predicted by the Riemann-sum integral.
    pub predicted_constant: f64,
    /// `(max - min) / mean` of the ratios over the last decade of the grid.
    pub last_decade_spread: f64,
    pub converged: bool,
}

pub fn marginal_asymptotics_check(
    law: &LatticeLaw,
    i: usize,
    x_grid: &[u64],
    tol: f64,
) -> Result<MarginalAsymptotics> {
    let Family::DependentNorm(dn) = law.family() else {
        return Err(Error::UnsupportedFamily(
            "marginal asymptotics check needs a dependent-norm law".into(),
        ));
    };
    if x_grid.is_empty() {
        return Err(invalid("empty grid"));
    }
    let gamma = dn.marginal_gamma(i);
    let b = dn.betas()[i];
    let ratios: Vec<f64> = x_grid
        .iter()
        .map(|&x| {
            let xf = x as f64;
            dn.marginal_pmf(i, x as i64) / (dn.psi().eval(xf.powf(b)) * xf.powf(-(1.0 + gamma)))
        })
        .collect();
    let xmax = *x_grid.iter().max().unwrap() as f64;
    let last: Vec<f64> = x_grid
        .iter()
        .zip(&ratios)
        .filter(|(x, _)| **x as f64 >= xmax / 10.0)
        .map(|(_, r)| *r)
        .collect();
    let (lo, hi) = last
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    let mean = last.iter().sum::<f64>() / last.len() as f64;
    let spread = (hi - lo) / mean;
    Ok(MarginalAsymptotics {
        coordinate: i,
        grid: x_grid.to_vec(),
        fitted_constant: *ratios.last().unwrap(),
        ratios,
        predicted_constant: dn.marginal_constant(i),
        last_decade_spread: spread,
        converged: spread <= tol,
    })
}
