use serde::{Deserialize, Serialize};

use super::convolve::{convolve, ConvMethod, StepConvolver};
use super::lattice::{marginal_step, LatticeBox, LatticeField};
use crate::error::{invalid, Error, Result};
use crate::numerics::stats::KahanSum;
use crate::scaling::ScalingSchedule;
use crate::tail_models::{Family, LatticeLaw};

/// How the n-step law is assembled from the one-step law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepSchedule {
    /// `n - 1` convolutions with the one-step field.
    Linear,
    /// Repeated squaring.
    Binary,
}

/// How a Green-function remainder was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RemainderKind {
    /// The omitted terms vanish identically.
    Exact,
    /// Rigorous upper bound.
    Certified,
    /// Local-limit estimate with an empirically fitted constant.
    Heuristic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GreenValue {
    pub x: Vec<i64>,
    pub value: f64,
    pub remainder: f64,
    pub kind: RemainderKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GreenReport {
    pub values: Vec<GreenValue>,
    /// Number of steps actually convolved.
    pub steps: usize,
    /// Dropped-mass bound of the last field.
    pub dropped_mass: f64,
    /// `series[t][n-1] = P(S_n = x_t)` for the computed `n`.
    pub series: Vec<Vec<f64>>,
}

/// `P(S_n - b_n >= x)` for one level `x`, with an error bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailValue {
    pub x: f64,
    pub value: f64,
    pub error: f64,
}

/// Exits from `bbox` can never return: every coordinate is nonnegative and
/// the box reaches down to the smallest step.
fn exits_irreversible(law: &LatticeLaw, bbox: &LatticeBox) -> bool {
    (0..law.dim()).all(|i| {
        let smin = law.marginal_support(i).0;
        smin >= 0 && bbox.lower()[i] <= smin
    })
}

fn axis_exits_irreversible(law: &LatticeLaw, i: usize, lo: i64) -> bool {
    let smin = law.marginal_support(i).0;
    smin >= 0 && lo <= smin
}

/// Step field covering every displacement between two cells of `target`.
pub fn step_field_for(law: &LatticeLaw, target: &LatticeBox) -> Result<LatticeField> {
    let d = law.dim();
    let mut lower = Vec::with_capacity(d);
    let mut upper = Vec::with_capacity(d);
    for i in 0..d {
        let (smin, smax) = law.marginal_support(i);
        let span = target.upper()[i] - target.lower()[i];
        let lo = smin.max(-span);
        let hi = smax.min(span).max(lo);
        lower.push(lo);
        upper.push(hi);
    }
    LatticeField::one_step(law, &LatticeBox::with_cap(lower, upper, 1 << 28)?)
}

/// Law of `S_n^(i)` on `[lo, hi]`, with steps above `cap` excluded.
pub fn marginal_nstep(
    law: &LatticeLaw,
    i: usize,
    n: usize,
    lo: i64,
    hi: i64,
    cap: Option<i64>,
    schedule: StepSchedule,
    method: ConvMethod,
) -> Result<LatticeField> {
    if n == 0 {
        return Err(invalid("n-step law needs n >= 1"));
    }
    let target = LatticeBox::new(vec![lo], vec![hi])?;
    let (one, drop_one) = marginal_step(law, i, lo, hi, cap);
    let first = LatticeField::from_values(target.clone(), one, drop_one)?;
    if n == 1 {
        return Ok(first);
    }
    let (smin, smax) = law.marginal_support(i);
    let span = hi - lo;
    let s_lo = smin.max(-span);
    let s_hi = smax.min(span).min(cap.unwrap_or(i64::MAX)).max(s_lo);
    let (vals, drop) = marginal_step(law, i, s_lo, s_hi, cap);
    let step = LatticeField::from_values(LatticeBox::new(vec![s_lo], vec![s_hi])?, vals, drop)?;
    match schedule {
        StepSchedule::Linear => {
            let conv = StepConvolver::new(step, target, method)?;
            let mut f = first;
            for _ in 1..n {
                f = conv.apply(&f)?;
            }
            Ok(f)
        }
        StepSchedule::Binary => power(first, n, &target, method),
    }
}

fn power(
    base: LatticeField,
    n: usize,
    target: &LatticeBox,
    method: ConvMethod,
) -> Result<LatticeField> {
    let mut acc: Option<LatticeField> = None;
    let mut sq = base;
    let mut k = n;
    loop {
        if k & 1 == 1 {
            acc = Some(match acc {
                None => sq.clone(),
                Some(a) => convolve(&a, &sq, target, method)?,
            });
        }
        k >>= 1;
        if k == 0 {
            break;
        }
        sq = convolve(&sq, &sq, target, method)?;
    }
    Ok(acc.expect("n >= 1"))
}

fn outer_product(fields: &[LatticeField], bbox: &LatticeBox) -> LatticeField {
    let shape = bbox.shape();
    let mut values = vec![1.0; bbox.volume()];
    let mut stride = bbox.volume();
    for (k, f) in fields.iter().enumerate() {
        stride /= shape[k];
        for (j, v) in values.iter_mut().enumerate() {
            *v *= f.values[(j / stride) % shape[k]];
        }
    }
    // total mass of the product is the product of totals
    let kept: f64 = fields.iter().map(|f| f.total()).product();
    let full: f64 = fields.iter().map(|f| f.total() + f.dropped_mass).product();
    LatticeField {
        bbox: bbox.clone(),
        values,
        dropped_mass: (full - kept).max(0.0),
    }
}

/// Law of `S_n` restricted to `bbox`.
pub fn nstep_distribution(
    law: &LatticeLaw,
    n: usize,
    bbox: &LatticeBox,
    schedule: StepSchedule,
    method: ConvMethod,
) -> Result<LatticeField> {
    if n == 0 {
        return Err(invalid("n-step law needs n >= 1"));
    }
    if bbox.dim() != law.dim() {
        return Err(Error::DimensionMismatch {
            expected: law.dim(),
            got: bbox.dim(),
        });
    }
    if let Family::IndependentProduct(_) = law.family() {
        let fields = (0..law.dim())
            .map(|i| {
                marginal_nstep(
                    law,
                    i,
                    n,
                    bbox.lower()[i],
                    bbox.upper()[i],
                    None,
                    schedule,
                    method,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        return Ok(outer_product(&fields, bbox));
    }
    let first = LatticeField::one_step(law, bbox)?;
    if n == 1 {
        return Ok(first);
    }
    match schedule {
        StepSchedule::Linear => {
            let conv = StepConvolver::new(step_field_for(law, bbox)?, bbox.clone(), method)?;
            let mut f = first;
            for _ in 1..n {
                f = conv.apply(&f)?;
            }
            Ok(f)
        }
        StepSchedule::Binary => power(first, n, bbox, method),
    }
}

/// `[min(0, x_i) - 4 a, max(0, x_i) + 4 a]` per axis with `a = a_{n_max}`,
/// clipped below at 0 for nonnegative coordinates and above at the largest
/// target for coordinates whose exits are irreversible.
pub fn default_box(
    law: &LatticeLaw,
    schedule: &ScalingSchedule,
    targets: &[Vec<i64>],
    n_max: usize,
) -> Result<LatticeBox> {
    let d = law.dim();
    if targets.is_empty() {
        return Err(invalid("no targets"));
    }
    let mut lower = vec![0i64; d];
    let mut upper = vec![0i64; d];
    for i in 0..d {
        let lo_t = targets.iter().map(|x| x[i]).min().unwrap_or(0).min(0);
        let hi_t = targets.iter().map(|x| x[i]).max().unwrap_or(0).max(0);
        let smin = law.marginal_support(i).0;
        if smin >= 0 {
            lower[i] = smin.min(lo_t).min(0);
            upper[i] = hi_t;
        } else {
            let a = schedule.a_n(i, n_max.max(1) as f64)?;
            let spread = (4.0 * a).ceil() as i64;
            lower[i] = lo_t - spread;
            upper[i] = hi_t + spread;
        }
    }
    LatticeBox::new(lower, upper)
}

/// One coordinate's (or the full) sweep state.
enum SweepState {
    Product {
        convs: Vec<StepConvolver>,
        fields: Vec<LatticeField>,
    },
    Joint {
        conv: StepConvolver,
        field: LatticeField,
    },
}

impl SweepState {
    fn prob(&self, x: &[i64]) -> f64 {
        match self {
            SweepState::Product { fields, .. } => {
                fields.iter().zip(x).map(|(f, &k)| f.get(&[k])).product()
            }
            SweepState::Joint { field, .. } => field.get(x),
        }
    }

    fn advance(&mut self) -> Result<()> {
        match self {
            SweepState::Product { convs, fields } => {
                for (c, f) in convs.iter().zip(fields.iter_mut()) {
                    *f = c.apply(f)?;
                }
            }
            SweepState::Joint { conv, field } => *field = conv.apply(field)?,
        }
        Ok(())
    }

    /// Bound on the error of point probabilities from truncation.
    fn dropped(&self) -> f64 {
        match self {
            SweepState::Product { fields, .. } => fields.iter().map(|f| f.dropped_mass).sum(),
            SweepState::Joint { field, .. } => field.dropped_mass,
        }
    }

    fn is_empty(&self) -> bool {
        match self {
            SweepState::Product { fields, .. } => {
                fields.iter().any(|f| f.values.iter().all(|&v| v == 0.0))
            }
            SweepState::Joint { field, .. } => field.values.iter().all(|&v| v == 0.0),
        }
    }

    /// `P(S^(i) <= x)` restricted to the box.
    fn mass_at_most(&self, i: usize, x: i64) -> f64 {
        let mut s = KahanSum::default();
        match self {
            SweepState::Product { fields, .. } => {
                let f = &fields[i];
                for (j, &v) in f.values.iter().enumerate() {
                    if f.bbox.lower()[0] + j as i64 <= x {
                        s.add(v);
                    }
                }
                // other coordinates only shrink the joint probability
            }
            SweepState::Joint { field, .. } => {
                for (j, &v) in field.values.iter().enumerate() {
                    if v > 0.0 && field.bbox.point(j)[i] <= x {
                        s.add(v);
                    }
                }
            }
        }
        s.value()
    }
}

/// Upper bound for `sum_{n > n_max} 1/(a_n^(1) ... a_n^(d))` by doubling blocks.
fn inverse_scale_tail(schedule: &ScalingSchedule, n_max: usize) -> Result<f64> {
    let d = schedule.dim();
    let mut sum = 0.0;
    let mut n = n_max.max(1) as f64;
    for _ in 0..200 {
        let prod: f64 = (0..d)
            .map(|i| schedule.a_n(i, n))
            .collect::<Result<Vec<_>>>()?
            .iter()
            .product();
        let term = n / prod;
        sum += term;
        if term < 1e-9 * sum {
            break;
        }
        n *= 2.0;
        if n > 1e18 {
            break;
        }
    }
    Ok(sum)
}

/// `G(x) = sum_{n <= n_max} P(S_n = x)` for each target, with a remainder
/// bound for the omitted terms.
pub fn green_exact(
    law: &LatticeLaw,
    schedule: &ScalingSchedule,
    targets: &[Vec<i64>],
    n_max: usize,
    bbox: &LatticeBox,
    method: ConvMethod,
) -> Result<GreenReport> {
    let d = law.dim();
    if n_max == 0 {
        return Err(invalid("n_max must be at least 1"));
    }
    for x in targets {
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
        if !bbox.contains(x) {
            return Err(Error::Precondition(format!(
                "target {x:?} lies outside the box"
            )));
        }
    }
    let irreversible = exits_irreversible(law, bbox);
    let renewal_stop = if law.is_renewal() {
        targets
            .iter()
            .map(|x| *x.iter().min().expect("d >= 1"))
            .max()
            .unwrap_or(0)
            .max(1) as usize
    } else {
        usize::MAX
    };
    let n_stop = n_max.min(renewal_stop);

    let mut state = match law.family() {
        Family::IndependentProduct(_) => {
            let mut convs = Vec::with_capacity(d);
            let mut fields = Vec::with_capacity(d);
            for i in 0..d {
                let (lo, hi) = (bbox.lower()[i], bbox.upper()[i]);
                let (one, drop_one) = marginal_step(law, i, lo, hi, None);
                let target = LatticeBox::new(vec![lo], vec![hi])?;
                fields.push(LatticeField::from_values(target.clone(), one, drop_one)?);
                let (smin, smax) = law.marginal_support(i);
                let s_lo = smin.max(lo - hi);
                let s_hi = smax.min(hi - lo).max(s_lo);
                let (vals, drop) = marginal_step(law, i, s_lo, s_hi, None);
                let step = LatticeField::from_values(
                    LatticeBox::new(vec![s_lo], vec![s_hi])?,
                    vals,
                    drop,
                )?;
                convs.push(StepConvolver::new(step, target, method)?);
            }
            SweepState::Product { convs, fields }
        }
        _ => SweepState::Joint {
            conv: StepConvolver::new(step_field_for(law, bbox)?, bbox.clone(), method)?,
            field: LatticeField::one_step(law, bbox)?,
        },
    };

    let mut sums = vec![KahanSum::default(); targets.len()];
    let mut series = vec![Vec::new(); targets.len()];
    let mut drop_sum = 0.0;
    let mut steps = 0;
    let mut exhausted = false;
    for n in 1..=n_stop {
        if n > 1 {
            state.advance()?;
        }
        steps = n;
        drop_sum += state.dropped();
        for (t, x) in targets.iter().enumerate() {
            let p = state.prob(x);
            sums[t].add(p);
            series[t].push(p);
        }
        if irreversible && state.is_empty() {
            exhausted = true;
            break;
        }
    }

    let alpha_sum: f64 = law.alphas().iter().map(|a| 1.0 / a).sum();
    let truncation = if irreversible { 0.0 } else { drop_sum };
    let mut values = Vec::with_capacity(targets.len());
    for (t, x) in targets.iter().enumerate() {
        let min_coord = *x.iter().min().expect("d >= 1");
        let (remainder, kind) = if exhausted || (law.is_renewal() && steps as i64 >= min_coord) {
            (
                truncation,
                if truncation == 0.0 {
                    RemainderKind::Exact
                } else {
                    RemainderKind::Certified
                },
            )
        } else {
            let monotone = (0..d)
                .filter(|&i| law.is_nonnegative(i) && law.prob_zero(i) < 1.0)
                .map(|i| {
                    let mut at_most = state.mass_at_most(i, x[i]);
                    if !axis_exits_irreversible(law, i, bbox.lower()[i]) {
                        at_most += state.dropped();
                    }
                    at_most.min(1.0) * (x[i] as f64 + 1.0) / (1.0 - law.prob_zero(i))
                })
                .fold(f64::INFINITY, f64::min);
            if monotone.is_finite() {
                (monotone + truncation, RemainderKind::Certified)
            } else {
                if alpha_sum <= 1.0 {
                    return Err(Error::TransienceViolation(format!(
                        "sum of 1/alpha_i = {alpha_sum} <= 1; the tail of the Green sum is not finite"
                    )));
                }
                let from = (steps / 10).max(1);
                let mut c_hat: f64 = 0.0;
                for n in from..=steps {
                    let scale: f64 = (0..d)
                        .map(|i| schedule.a_n(i, n as f64))
                        .collect::<Result<Vec<_>>>()?
                        .iter()
                        .product();
                    c_hat = c_hat.max(scale * series[t][n - 1]);
                }
                (
                    c_hat * inverse_scale_tail(schedule, steps)? + truncation,
                    RemainderKind::Heuristic,
                )
            }
        };
        values.push(GreenValue {
            x: x.clone(),
            value: sums[t].value(),
            remainder,
            kind,
        });
    }
    Ok(GreenReport {
        values,
        steps,
        dropped_mass: state.dropped(),
        series,
    })
}

/// `P(S_n^(i) - b_n^(i) >= x, max_k X_k^(i) <= cap)` for each level `x`.
pub fn tail_prob_exact(
    law: &LatticeLaw,
    schedule: &ScalingSchedule,
    i: usize,
    n: usize,
    levels: &[f64],
    cap: Option<i64>,
    method: ConvMethod,
) -> Result<Vec<TailValue>> {
    if i >= law.dim() {
        return Err(Error::DimensionMismatch {
            expected: law.dim(),
            got: i + 1,
        });
    }
    if n == 0 || levels.is_empty() {
        return Err(invalid(
            "tail probabilities need n >= 1 and at least one level",
        ));
    }
    let b = schedule.b_n(i, n as f64)?;
    let top_level = levels.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let low_level = levels.iter().cloned().fold(f64::INFINITY, f64::min);
    let top = (b + top_level).ceil() as i64;
    let smin = law.marginal_support(i).0;
    let (lo, hi) = if smin >= 0 {
        (smin.min(0), top.max(smin))
    } else {
        let a = schedule.a_n(i, n as f64)?;
        let w = (16.0 * (a + b.abs() + top_level.abs().max(low_level.abs()))).ceil() as i64;
        ((b.floor() as i64).min(0) - w, top.max(0) + w)
    };
    let field = marginal_nstep(law, i, n, lo, hi, cap, StepSchedule::Binary, method)?;
    let irreversible = axis_exits_irreversible(law, i, lo);
    let convolutions = (usize::BITS - n.leading_zeros()) as f64 * 2.0;
    let noise = match method {
        ConvMethod::Naive => 0.0,
        _ => 1e-16 * convolutions * (field.values.len() as f64).sqrt(),
    };
    let mut out = Vec::with_capacity(levels.len());
    for &x in levels {
        let k0 = (b + x).ceil() as i64;
        let mut s = KahanSum::default();
        for (j, &v) in field.values.iter().enumerate() {
            if lo + j as i64 >= k0 {
                s.add(v);
            }
        }
        let (value, error) = if irreversible {
            (s.value() + field.dropped_mass, noise)
        } else {
            (s.value(), noise + field.dropped_mass)
        };
        out.push(TailValue { x, value, error });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::tail_models::Marginal1d;

    fn example1() -> LatticeLaw {
        LatticeLaw::independent(vec![Marginal1d::Pareto { gamma: 0.5 }; 2]).unwrap()
    }

    fn f(k: f64) -> f64 {
        k.powf(-0.5) - (k + 1.0).powf(-0.5)
    }

    #[test]
    fn deterministic_walk() {
        let law = LatticeLaw::deterministic(vec![1, 1]).unwrap();
        let b = LatticeBox::cube(2, 0, 10).unwrap();
        let p = nstep_distribution(&law, 5, &b, StepSchedule::Linear, ConvMethod::Naive).unwrap();
        assert_eq!(p.get(&[5, 5]), 1.0);
        let s = ScalingSchedule::new(Arc::new(law.clone()));
        let targets = vec![vec![7, 7], vec![3, 4], vec![0, 0]];
        let g = green_exact(&law, &s, &targets, 10, &b, ConvMethod::Naive).unwrap();
        assert_eq!(g.values[0].value, 1.0);
        assert_eq!(g.values[1].value, 0.0);
        assert_eq!(g.values[2].value, 0.0);
        assert!(g
            .values
            .iter()
            .all(|v| v.remainder == 0.0 && v.kind == RemainderKind::Exact));
    }

    #[test]
    fn two_step_enumeration() {
        let law = example1();
        let b = LatticeBox::cube(2, 0, 8).unwrap();
        for sched in [StepSchedule::Linear, StepSchedule::Binary] {
            let p = nstep_distribution(&law, 2, &b, sched, ConvMethod::Naive).unwrap();
            assert!((p.get(&[2, 2]) - f(1.0).powi(4)).abs() < 1e-16);
        }
        let s = ScalingSchedule::new(Arc::new(law.clone()));
        let g = green_exact(&law, &s, &[vec![2, 2]], 2, &b, ConvMethod::Auto).unwrap();
        let expect = f(1.0).powi(4) + f(2.0).powi(2);
        assert!((g.values[0].value - expect).abs() < 1e-16);
        assert_eq!(g.values[0].kind, RemainderKind::Exact);
    }

    #[test]
    fn product_and_joint_paths_agree() {
        let law = LatticeLaw::independent(vec![
            Marginal1d::Uniform { lo: 0, hi: 2 },
            Marginal1d::Uniform { lo: 0, hi: 1 },
        ])
        .unwrap();
        let b = LatticeBox::cube(2, 0, 12).unwrap();
        let joint = LatticeField::one_step(&law, &b).unwrap();
        let conv = StepConvolver::new(
            step_field_for(&law, &b).unwrap(),
            b.clone(),
            ConvMethod::Naive,
        )
        .unwrap();
        let mut f = joint;
        for _ in 1..6 {
            f = conv.apply(&f).unwrap();
        }
        let p = nstep_distribution(&law, 6, &b, StepSchedule::Linear, ConvMethod::Naive).unwrap();
        for (a, c) in f.values().iter().zip(p.values()) {
            assert!((a - c).abs() < 1e-15);
        }
    }

    #[test]
    fn monotone_remainder_is_certified() {
        let law = LatticeLaw::independent(vec![Marginal1d::Uniform { lo: 0, hi: 2 }; 2]).unwrap();
        let s = ScalingSchedule::new(Arc::new(law.clone()));
        let b = LatticeBox::cube(2, 0, 30).unwrap();
        let short = green_exact(&law, &s, &[vec![20, 20]], 15, &b, ConvMethod::Naive).unwrap();
        let long = green_exact(&law, &s, &[vec![20, 20]], 200, &b, ConvMethod::Naive).unwrap();
        let (gs, gl) = (&short.values[0], &long.values[0]);
        assert_eq!(gs.kind, RemainderKind::Certified);
        assert!(gs.value <= gl.value + 1e-15 && gl.value <= gs.value + gs.remainder);
        assert!(gl.remainder < 1e-12);
    }

    #[test]
    fn heavy_tail_levels() {
        let law = LatticeLaw::independent(vec![Marginal1d::Pareto { gamma: 0.5 }]).unwrap();
        let s = ScalingSchedule::new(Arc::new(law.clone()));
        let one = tail_prob_exact(&law, &s, 0, 1, &[10.0, 100.0], None, ConvMethod::Naive).unwrap();
        // P(X >= 10) = P(X > 9) = 10^{-1/2}
        assert!((one[0].value - 10f64.powf(-0.5)).abs() < 1e-14);
        let capped = tail_prob_exact(&law, &s, 0, 1, &[10.0], Some(0), ConvMethod::Naive).unwrap();
        assert_eq!(capped[0].value, 0.0);
    }
}
