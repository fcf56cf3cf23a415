//! Local limit and local large deviation checks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{
    BoundCheckReport, BoundPoint, ConvergencePoint, ConvergenceReport, Criterion, GrowthRule,
};
use crate::error::{Error, Result};
use crate::exact_engine::{
    marginal_nstep, nstep_distribution, ConvMethod, LatticeBox, StepSchedule,
};
use crate::scaling::ScalingSchedule;
use crate::stable_limit::StableDensityModel;
use crate::tail_models::{h_function_audit, Family, LatticeLaw};

/// Largest number of evaluation points per axis in the sup-error scan.
const SCAN_POINTS: usize = 1024;

/// Round-off allowance for FFT-based fields.
fn fft_noise(len: usize, n: u64) -> f64 {
    1e-16 * 2.0 * (n.max(2) as f64).log2() * (len as f64).sqrt()
}

/// Axis range of `S_n^(i)` large enough to carry the mass near the
/// requested points: nonnegative axes start at 0 (exits are final there),
/// signed axes are widened by `16 a_n + |b_n|` around the origin and points.
fn axis_range(
    law: &LatticeLaw,
    schedule: &ScalingSchedule,
    i: usize,
    n: u64,
    lo: i64,
    hi: i64,
) -> Result<(i64, i64)> {
    let (smin, smax) = law.marginal_support(i);
    let nf = n as f64;
    if smin >= 0 {
        let top = (smax as f64 * nf).min(9e15) as i64;
        return Ok((smin.min(0).min(lo), hi.min(top).max(lo)));
    }
    let a = schedule.a_n(i, nf)?;
    let b = schedule.b_n(i, nf)?;
    let w = (16.0 * a + b.abs()).ceil() as i64;
    Ok((lo.min(-w), hi.max(w)))
}

/// Point probabilities `P(S_n = x)` with an error bound each.
pub(crate) fn point_probabilities(
    law: &LatticeLaw,
    schedule: &ScalingSchedule,
    n: u64,
    points: &[Vec<i64>],
) -> Result<Vec<(f64, f64)>> {
    let d = law.dim();
    let mut lo = vec![i64::MAX; d];
    let mut hi = vec![i64::MIN; d];
    for x in points {
        for i in 0..d {
            lo[i] = lo[i].min(x[i]);
            hi[i] = hi[i].max(x[i]);
        }
    }
    let mut ranges = Vec::with_capacity(d);
    for i in 0..d {
        ranges.push(axis_range(law, schedule, i, n, lo[i], hi[i])?);
    }
    if let Family::IndependentProduct(_) = law.family() {
        let fields = ranges
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| {
                marginal_nstep(
                    law,
                    i,
                    n as usize,
                    a,
                    b,
                    None,
                    StepSchedule::Binary,
                    ConvMethod::Auto,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let err: f64 = fields
            .iter()
            .map(|f| f.dropped_mass() + fft_noise(f.values().len(), n))
            .sum();
        return Ok(points
            .iter()
            .map(|x| {
                let p = fields.iter().zip(x).map(|(f, &k)| f.get(&[k])).product();
                (p, err)
            })
            .collect());
    }
    let bbox = LatticeBox::new(
        ranges.iter().map(|r| r.0).collect(),
        ranges.iter().map(|r| r.1).collect(),
    )?;
    let f = nstep_distribution(
        law,
        n as usize,
        &bbox,
        StepSchedule::Binary,
        ConvMethod::Auto,
    )?;
    let err = f.dropped_mass() + fft_noise(bbox.volume(), n);
    Ok(points.iter().map(|x| (f.get(x), err)).collect())
}

/// Sup over a box of `|a_n^(1)...a_n^(d) P(S_n = x) - g(x_n)|` for each `n`.
/// The box is `b_n +- window * a_n` per axis (intersected with the range of
/// `S_n`), scanned on a sub-lattice of at most 1024 points per axis.
pub fn check_llt(
    law: &LatticeLaw,
    schedule: &ScalingSchedule,
    n_grid: &[u64],
    window: f64,
    model: Option<&StableDensityModel>,
) -> Result<ConvergenceReport> {
    if law.is_degenerate() {
        return Err(Error::Precondition(
            "the local limit needs a non-degenerate limit law".into(),
        ));
    }
    let owned;
    let model = match model {
        Some(m) => m,
        None => {
            owned = StableDensityModel::product_for_law(law)
                .map_err(|e| Error::Precondition(format!("missing density model: {e}")))?;
            &owned
        }
    };
    let d = law.dim();
    let mut grid = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let nf = n as f64;
        let a: Vec<f64> = (0..d).map(|i| schedule.a_n(i, nf)).collect::<Result<_>>()?;
        let b: Vec<f64> = (0..d).map(|i| schedule.b_n(i, nf)).collect::<Result<_>>()?;
        let mut axes = Vec::with_capacity(d);
        for i in 0..d {
            let (smin, smax) = law.marginal_support(i);
            let lo = ((b[i] - window * a[i]).floor() as i64).max(smin.saturating_mul(n as i64));
            let hi = ((b[i] + window * a[i]).ceil() as i64).min(smax.saturating_mul(n as i64));
            let stride = ((hi - lo + 1) as usize).div_ceil(SCAN_POINTS).max(1) as i64;
            axes.push((lo, hi, stride));
        }
        let (sup, err) = match (law.family(), model) {
            (Family::IndependentProduct(_), StableDensityModel::Product(margs)) => {
                // per-axis scaled probabilities and limit densities
                let mut cols = Vec::with_capacity(d);
                let mut err = 0.0;
                for i in 0..d {
                    let (lo, hi, stride) = axes[i];
                    let (r_lo, r_hi) = axis_range(law, schedule, i, n, lo, hi)?;
                    let f = marginal_nstep(
                        law,
                        i,
                        n as usize,
                        r_lo,
                        r_hi,
                        None,
                        StepSchedule::Binary,
                        ConvMethod::Auto,
                    )?;
                    err += (f.dropped_mass() + fft_noise(f.values().len(), n)) * a[i];
                    let col: Vec<(f64, f64)> = (0..)
                        .map(|k| lo + k * stride)
                        .take_while(|&x| x <= hi)
                        .map(|x| {
                            let z = (x as f64 - b[i]) / a[i];
                            Ok((a[i] * f.get(&[x]), margs[i].density(z)?))
                        })
                        .collect::<Result<_>>()?;
                    cols.push(col);
                }
                (product_sup(&cols), err)
            }
            _ => {
                let pts: Vec<Vec<i64>> = lattice_points(&axes);
                let probs = point_probabilities(law, schedule, n, &pts)?;
                let scale: f64 = a.iter().product();
                let mut sup: f64 = 0.0;
                for (x, (p, _)) in pts.iter().zip(&probs) {
                    let z: Vec<f64> = (0..d).map(|i| (x[i] as f64 - b[i]) / a[i]).collect();
                    sup = sup.max((scale * p - model.density(&z)?).abs());
                }
                (sup, probs.first().map_or(0.0, |p| p.1) * scale)
            }
        };
        grid.push(ConvergencePoint {
            scale: nf,
            x: axes.iter().map(|ax| ax.1).collect(),
            observed: sup,
            predicted: 1.0,
            sigma: err,
        });
    }
    let mut report = ConvergenceReport::new("llt", grid, Criterion::Decreasing);
    report.notes.push(format!(
        "sup over b_n +- {window} a_n per axis, scanned on at most {SCAN_POINTS} points per axis"
    ));
    Ok(report)
}

fn lattice_points(axes: &[(i64, i64, i64)]) -> Vec<Vec<i64>> {
    let mut pts = vec![Vec::new()];
    for &(lo, hi, stride) in axes {
        pts = pts
            .into_iter()
            .flat_map(|p: Vec<i64>| {
                (0..)
                    .map(move |k| lo + k * stride)
                    .take_while(move |&x| x <= hi)
                    .map(move |x| {
                        let mut q = p.clone();
                        q.push(x);
                        q
                    })
            })
            .collect();
    }
    pts
}

/// `sup |prod f_i - prod g_i|` over the product of the columns.
fn product_sup(cols: &[Vec<(f64, f64)>]) -> f64 {
    let mut acc = vec![(1.0, 1.0)];
    for col in &cols[..cols.len() - 1] {
        acc = acc
            .iter()
            .flat_map(|&(f, g)| col.iter().map(move |&(cf, cg)| (f * cf, g * cg)))
            .collect();
    }
    let last = &cols[cols.len() - 1];
    acc.par_iter()
        .map(|&(f, g)| {
            last.iter()
                .map(|&(cf, cg)| (f * cf - g * cg).abs())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// Which local large deviation bound to test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LldMode {
    /// `a_n^(1)...a_n^(d) P <= n phi_i(|x_i|) |x_i|^{-gamma_i} + exp term`,
    /// for any `i` with `|x_i| >= a_n^(i)`.
    General,
    /// `P <= min_i {...} / prod max(|x_i|, a_n^(i))`, under the local
    /// h-function condition.
    Local,
    /// `P <= n phi(|x|) |x|^{-(d+gamma)} + a_n^{-d} exp term` for
    /// `|x| >= a_n`, balanced laws with a radial local bound.
    Balanced,
}

/// Settings shared by the local bound checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LldSettings {
    pub max_growth: f64,
    /// Candidate exponential rates are `2^k` for `k` in this range.
    pub rate_exponents: (i32, i32),
}

impl Default for LldSettings {
    fn default() -> Self {
        LldSettings {
            max_growth: 1.5,
            rate_exponents: (-12, 4),
        }
    }
}

struct Geometry {
    a: Vec<f64>,
    /// `floor(b_n)`.
    shift: Vec<i64>,
}

/// Bound expression for one point; `None` when the point is outside the
/// theorem's range.
fn lld_bound(
    law: &LatticeLaw,
    mode: LldMode,
    n: u64,
    x: &[i64],
    g: &Geometry,
    rate: f64,
    radial: Option<&Radial>,
) -> Option<(f64, Vec<f64>)> {
    let d = law.dim();
    let nf = n as f64;
    let power = |i: usize, ax: f64| {
        let spec = law.marginal_spec(i);
        nf * spec.phi.eval(ax) * ax.powf(-spec.gamma)
    };
    let gauss = |i: usize| law.marginal_spec(i).alpha == 2.0;
    match mode {
        LldMode::General => {
            let scale: f64 = g.a.iter().product();
            let mut best: Option<(f64, Vec<f64>)> = None;
            for i in 0..d {
                let ax = x[i].unsigned_abs() as f64;
                if ax < g.a[i] {
                    continue;
                }
                let p = power(i, ax);
                let e = if gauss(i) {
                    let sigma = law.truncated_moments(i, ax).1;
                    (-rate * ax * ax / (nf * sigma)).exp()
                } else {
                    0.0
                };
                let v = (p + e) / scale;
                if best.as_ref().is_none_or(|b| v < b.0) {
                    best = Some((v, vec![p / scale, e / scale]));
                }
            }
            best
        }
        LldMode::Local => {
            let denom: f64 = (0..d)
                .map(|i| (x[i].unsigned_abs() as f64).max(g.a[i]))
                .product();
            let mut best: Option<(f64, Vec<f64>)> = None;
            for i in 0..d {
                let ax = x[i].unsigned_abs() as f64;
                if ax == 0.0 {
                    continue;
                }
                let p = power(i, ax);
                let e = if gauss(i) {
                    (-rate * (ax / g.a[i]).powi(2)).exp()
                } else {
                    0.0
                };
                let v = (p + e) / denom;
                if best.as_ref().is_none_or(|b| v < b.0) {
                    best = Some((v, vec![p / denom, e / denom]));
                }
            }
            best
        }
        LldMode::Balanced => {
            let radial = radial?;
            let r = radial.norm(x);
            let a = g.a[0];
            if r < a {
                return None;
            }
            let p = nf * radial.phi(r) * r.powf(-(d as f64 + radial.gamma));
            let e = if gauss(0) {
                a.powi(-(d as i32)) * (-rate * (r / a).powi(2)).exp()
            } else {
                0.0
            };
            Some((p + e, vec![p, e]))
        }
    }
}

/// Radial envelope `P(X = x) <= phi(|x|) |x|^{-(d+gamma)}` of a
/// dependent-norm law with equal exponents `b`, in the norm
/// `|x| = (sum |x_i|^b)^{1/b}`.
struct Radial {
    b: f64,
    gamma: f64,
    c0: f64,
    psi: crate::tail_models::SlowlyVarying,
}

impl Radial {
    fn for_law(law: &LatticeLaw) -> Result<Self> {
        match law.family() {
            Family::DependentNorm(dn) if dn.betas().iter().all(|&b| b == dn.betas()[0]) => {
                let b = dn.betas()[0];
                Ok(Radial {
                    b,
                    gamma: b * dn.beta() - dn.dim() as f64,
                    c0: dn.c0(),
                    psi: dn.psi().clone(),
                })
            }
            _ => Err(Error::Precondition(
                "balanced mode needs a dependent-norm law with equal exponents".into(),
            )),
        }
    }

    fn norm(&self, x: &[i64]) -> f64 {
        x.iter()
            .map(|&v| (v.unsigned_abs() as f64).powf(self.b))
            .sum::<f64>()
            .powf(1.0 / self.b)
    }

    fn phi(&self, r: f64) -> f64 {
        self.c0 * self.psi.eval(r.powf(self.b))
    }
}

/// Largest rate `2^k` (k in `range`) whose first-block fitted constant stays
/// within a factor 2 of the value at rate 0.
pub(crate) fn largest_admissible_rate(range: (i32, i32), c_hat: impl Fn(f64) -> f64) -> f64 {
    let base = c_hat(0.0).max(f64::MIN_POSITIVE);
    let mut best = 0.0;
    for k in range.0..=range.1 {
        let rate = 2f64.powi(k);
        if c_hat(rate) <= 2.0 * base {
            best = rate;
        }
    }
    best
}

/// Rate of the exponential terms, fitted on the first block. `None` when no
/// term is exponential.
fn fit_rate(
    law: &LatticeLaw,
    mode: LldMode,
    first: &[(u64, Vec<i64>, f64)],
    geoms: &[Geometry],
    radial: Option<&Radial>,
    range: (i32, i32),
) -> Option<f64> {
    if !law.alphas().contains(&2.0) {
        return None;
    }
    Some(largest_admissible_rate(range, |rate| {
        first
            .iter()
            .zip(geoms)
            .filter_map(|((n, x, obs), g)| {
                lld_bound(law, mode, *n, x, g, rate, radial).map(|(b, _)| obs / b)
            })
            .fold(0.0, f64::max)
    }))
}

/// Checks a local large deviation bound on the points
/// `x = floor(b_n) + m * a_n` (rounded away from zero) for `n` in `n_grid`
/// and multipliers `m` in `x_grid`. Block `k` of the report holds the points of `n_grid[k]`.
pub fn check_lld(
    law: &LatticeLaw,
    schedule: &ScalingSchedule,
    mode: LldMode,
    n_grid: &[u64],
    x_grid: &[Vec<f64>],
    settings: LldSettings,
) -> Result<BoundCheckReport> {
    let d = law.dim();
    if let Some(m) = x_grid.iter().find(|m| m.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: m.len(),
        });
    }
    let radial = match mode {
        LldMode::Balanced => Some(Radial::for_law(law)?),
        _ => None,
    };
    if mode == LldMode::Local {
        for i in 0..d {
            let audit = h_function_audit(law, i, 4096.0, 4096.0, 4096)?;
            if !audit.pass {
                return Err(Error::Precondition(format!(
                    "coordinate {i} fails the local h-function audit"
                )));
            }
        }
    }
    let mut n_sorted = n_grid.to_vec();
    n_sorted.sort_unstable();
    let mut notes = Vec::new();
    let mut rows = Vec::new();
    for (block, &n) in n_sorted.iter().enumerate() {
        let nf = n as f64;
        let a: Vec<f64> = (0..d).map(|i| schedule.a_n(i, nf)).collect::<Result<_>>()?;
        let shift: Vec<i64> = (0..d)
            .map(|i| schedule.b_n(i, nf).map(|b| b.floor() as i64))
            .collect::<Result<_>>()?;
        if mode == LldMode::Balanced && a.iter().any(|v| (v / a[0] - 1.0).abs() > 1e-6) {
            return Err(Error::Precondition(
                "balanced mode needs equal scales a_n^(i)".into(),
            ));
        }
        let xs: Vec<Vec<i64>> = x_grid
            .iter()
            .map(|m| (0..d).map(|i| away_from_zero(m[i] * a[i])).collect())
            .collect();
        let shifted: Vec<Vec<i64>> = xs
            .iter()
            .map(|x| x.iter().zip(&shift).map(|(v, s)| v + s).collect())
            .collect();
        let probs = point_probabilities(law, schedule, n, &shifted)?;
        for (x, (p, e)) in xs.into_iter().zip(probs) {
            rows.push((
                block as u32,
                n,
                x,
                p,
                e,
                Geometry {
                    a: a.clone(),
                    shift: shift.clone(),
                },
            ));
        }
    }
    let first: Vec<(u64, Vec<i64>, f64)> = rows
        .iter()
        .filter(|r| r.0 == 0)
        .map(|r| (r.1, r.2.clone(), r.3))
        .collect();
    let first_geoms: Vec<Geometry> = rows
        .iter()
        .filter(|r| r.0 == 0)
        .map(|r| Geometry {
            a: r.5.a.clone(),
            shift: r.5.shift.clone(),
        })
        .collect();
    let rate = fit_rate(
        law,
        mode,
        &first,
        &first_geoms,
        radial.as_ref(),
        settings.rate_exponents,
    );
    let mut grid = Vec::new();
    for (block, n, x, p, e, g) in &rows {
        match lld_bound(law, mode, *n, x, g, rate.unwrap_or(0.0), radial.as_ref()) {
            Some((bound, terms)) => grid.push(BoundPoint {
                n: *n,
                x: x.iter().map(|&v| v as f64).collect(),
                y: None,
                block: *block,
                observed: *p,
                bound,
                terms,
                error: *e,
            }),
            None => notes.push(format!(
                "n = {n}, x = {x:?} is outside the theorem's range; skipped"
            )),
        }
    }
    let theorem = match mode {
        LldMode::General => "lld-general",
        LldMode::Local => "lld-local",
        LldMode::Balanced => "lld-balanced",
    };
    let mut report = BoundCheckReport::new(
        theorem,
        grid,
        Criterion::StableConstant {
            max_growth: settings.max_growth,
            growth: GrowthRule::LastVsFirst,
        },
    );
    report.rate = rate;
    report.notes = notes;
    Ok(report)
}

/// Rounds away from zero, so `|x| >= a` survives for multipliers `>= 1`.
fn away_from_zero(v: f64) -> i64 {
    if v >= 0.0 {
        v.ceil() as i64
    } else {
        v.floor() as i64
    }
}

/// Compares the general and local bound expressions (constants 1, same
/// exponential rate) on points where every `|x_i| >= a_n^(i)`. Returns the
/// number of points compared and the number where local exceeds general.
pub fn bound_domination(
    law: &LatticeLaw,
    schedule: &ScalingSchedule,
    n_grid: &[u64],
    x_grid: &[Vec<f64>],
    rate: f64,
) -> Result<(usize, usize)> {
    let d = law.dim();
    let mut compared = 0;
    let mut violations = 0;
    for &n in n_grid {
        let nf = n as f64;
        let a: Vec<f64> = (0..d).map(|i| schedule.a_n(i, nf)).collect::<Result<_>>()?;
        let g = Geometry {
            a: a.clone(),
            shift: vec![0; d],
        };
        for m in x_grid {
            let x: Vec<i64> = (0..d).map(|i| away_from_zero(m[i] * a[i])).collect();
            if (0..d).any(|i| (x[i].unsigned_abs() as f64) < a[i]) {
                continue;
            }
            let general = lld_bound(law, LldMode::General, n, &x, &g, rate, None);
            let local = lld_bound(law, LldMode::Local, n, &x, &g, rate, None);
            if let (Some((gb, _)), Some((lb, _))) = (general, local) {
                compared += 1;
                if lb > gb {
                    violations += 1;
                }
            }
        }
    }
    Ok((compared, violations))
}
