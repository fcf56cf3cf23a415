//! Stable limit densities under the unit-`L` normalization of `a_n`, and
//! the line and ray integrals that give the strong renewal constants.

use std::collections::HashMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use serde::Serialize;
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma;

use crate::error::{invalid, Error, Result};
use crate::numerics::quad::{integrate_panels, Quad};
use crate::numerics::stats::quantile_sorted;
use crate::tail_models::{Family, LatticeLaw, MarginalTailSpec};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const DENSITY_ABS_TOL: f64 = 1e-8;
const MAX_PANELS: usize = 20_000;

/// Minimum sample count accepted by [`empirical_density_fit`].
pub const MIN_KDE_SAMPLES: usize = 100_000;

/// One-dimensional stable limit law.
///
/// For `alpha < 2` the law is the limit of `(S_n - b_n)/a_n` for a walk with
/// `n P(X > a_n x) -> p x^{-alpha}` and `n P(X < -a_n x) -> q x^{-alpha}`.
/// For `alpha = 2` it is the centered normal law with the given variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StableMarginal {
    pub alpha: f64,
    pub p: f64,
    pub q: f64,
    /// Variance of the normal law (`alpha = 2` only).
    pub variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ClosedForm {
    Normal,
    Cauchy,
    Levy { sign: f64 },
    None,
}

impl StableMarginal {
    pub fn new(alpha: f64, p: f64, q: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(invalid(format!(
                "stable index must lie in (0, 2], got {alpha}"
            )));
        }
        if p < 0.0 || q < 0.0 || (p + q - 1.0).abs() > 1e-12 {
            return Err(invalid(format!(
                "tail weights need p, q >= 0 and p + q = 1, got {p}, {q}"
            )));
        }
        Ok(StableMarginal {
            alpha,
            p,
            q,
            variance: 1.0,
        })
    }

    pub fn gaussian(variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(invalid(format!(
                "normal variance must be positive, got {variance}"
            )));
        }
        Ok(StableMarginal {
            alpha: 2.0,
            p: 0.5,
            q: 0.5,
            variance,
        })
    }

    /// Limit law of a coordinate with the given tail specification.
    pub fn from_tails(spec: &MarginalTailSpec) -> Result<Self> {
        spec.validate()?;
        if spec.alpha == 2.0 {
            Self::gaussian(1.0)
        } else {
            Self::new(spec.alpha, spec.p, spec.q)
        }
    }

    /// Limit law of coordinate `i` of `law`. For `alpha = 2` with finite
    /// variance the `a_n` equation uses the uncentered second moment, so the
    /// limit variance is `Var X / E X^2`.
    pub fn for_coordinate(law: &LatticeLaw, i: usize) -> Result<Self> {
        let spec = law.marginal_spec(i);
        if spec.alpha < 2.0 {
            return Self::from_tails(spec);
        }
        let (mu, m2) = law.truncated_moments(i, f64::MAX);
        if m2.is_finite() && m2 > 0.0 && spec.gamma > 2.0 {
            Self::gaussian(((m2 - mu * mu) / m2).max(0.0))
        } else {
            Self::gaussian(1.0)
        }
    }

    fn closed_form(&self) -> ClosedForm {
        if self.alpha == 2.0 {
            ClosedForm::Normal
        } else if self.alpha == 1.0 && self.p == self.q {
            ClosedForm::Cauchy
        } else if self.alpha == 0.5 && (self.p == 1.0 || self.q == 1.0) {
            ClosedForm::Levy {
                sign: if self.p == 1.0 { 1.0 } else { -1.0 },
            }
        } else {
            ClosedForm::None
        }
    }

    /// `log E exp(i t Z)`.
    pub fn log_cf(&self, t: f64) -> Complex64 {
        if t == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let a = self.alpha;
        if a == 2.0 {
            return Complex64::new(-0.5 * self.variance * t * t, 0.0);
        }
        if a == 1.0 {
            let skew = self.p - self.q;
            let at = t.abs();
            return Complex64::new(-0.5 * PI * at, skew * t * (1.0 - EULER_GAMMA - at.ln()));
        }
        let minus_it = Complex64::new(0.0, -t).powf(a);
        let plus_it = Complex64::new(0.0, t).powf(a);
        -gamma(1.0 - a) * (self.p * minus_it + self.q * plus_it)
    }

    /// Decay rate `c` with `|phi(t)| = exp(-c |t|^alpha)`.
    fn cf_decay(&self) -> f64 {
        match self.alpha {
            a if a == 2.0 => 0.5 * self.variance,
            a if a == 1.0 => 0.5 * PI,
            a => gamma(1.0 - a) * (0.5 * PI * a).cos(),
        }
    }

    fn inversion_panels(&self, z: f64) -> Result<Vec<f64>> {
        let t_max = (46.0 / self.cf_decay()).powf(1.0 / self.alpha);
        let width = if z == 0.0 {
            f64::INFINITY
        } else {
            PI / z.abs()
        };
        let mut panels = vec![0.0];
        let mut lo = t_max * 2f64.powi(-40);
        panels.push(lo);
        while lo < t_max {
            let hi = (2.0 * lo).min(t_max);
            let pieces = ((hi - lo) / width).ceil().max(1.0) as usize;
            if panels.len() + pieces > MAX_PANELS {
                return Err(Error::Accuracy {
                    requested: DENSITY_ABS_TOL,
                    achieved: f64::INFINITY,
                });
            }
            for k in 1..=pieces {
                panels.push(lo + (hi - lo) * k as f64 / pieces as f64);
            }
            lo = hi;
        }
        Ok(panels)
    }

    /// Density by numerical Fourier inversion, ignoring closed forms.
    pub fn density_by_inversion(&self, z: f64) -> Result<Quad> {
        if !z.is_finite() {
            return Err(invalid("density needs a finite argument"));
        }
        let panels = self.inversion_panels(z)?;
        let f = |t: f64| (Complex64::new(0.0, -t * z) + self.log_cf(t)).exp().re;
        let q = integrate_panels(f, &panels, 1e-12, 1e-11);
        let tail = (-46f64).exp();
        let out = Quad {
            value: q.value / PI,
            error: q.error / PI + tail,
        };
        if out.error > 10.0 * DENSITY_ABS_TOL {
            return Err(Error::Accuracy {
                requested: DENSITY_ABS_TOL,
                achieved: out.error,
            });
        }
        Ok(out)
    }

    /// Density at `z` (closed form when available).
    pub fn density(&self, z: f64) -> Result<f64> {
        Ok(match self.closed_form() {
            ClosedForm::Normal => {
                (-0.5 * z * z / self.variance).exp() / (2.0 * PI * self.variance).sqrt()
            }
            ClosedForm::Cauchy => {
                let s = 0.5 * PI;
                s / (PI * (s * s + z * z))
            }
            ClosedForm::Levy { sign } => levy_density(sign * z),
            ClosedForm::None => self.density_by_inversion(z)?.value.max(0.0),
        })
    }

    /// Distribution function at `z`.
    pub fn cdf(&self, z: f64) -> Result<f64> {
        Ok(match self.closed_form() {
            ClosedForm::Normal => 0.5 * erfc(-z * FRAC_1_SQRT_2 / self.variance.sqrt()),
            ClosedForm::Cauchy => 0.5 + (z / (0.5 * PI)).atan() / PI,
            ClosedForm::Levy { sign } => {
                if sign > 0.0 {
                    levy_cdf(z)
                } else {
                    1.0 - levy_cdf(-z)
                }
            }
            ClosedForm::None => {
                let panels = self.inversion_panels(z)?;
                let f = |t: f64| (Complex64::new(0.0, -t * z) + self.log_cf(t)).exp().im / t;
                let q = integrate_panels(f, &panels[1..], 1e-12, 1e-11);
                (0.5 - q.value / PI).clamp(0.0, 1.0)
            }
        })
    }
}

/// One-sided stable density with index 1/2 and Laplace transform
/// `exp(-sqrt(pi s))`.
pub fn levy_density(z: f64) -> f64 {
    if z <= 0.0 {
        0.0
    } else {
        0.5 * z.powf(-1.5) * (-PI / (4.0 * z)).exp()
    }
}

/// Distribution function matching [`levy_density`].
pub fn levy_cdf(z: f64) -> f64 {
    if z <= 0.0 {
        0.0
    } else {
        erfc((PI / (4.0 * z)).sqrt())
    }
}

/// Gaussian-kernel density estimate with bucketed neighbor lookup.
#[derive(Debug, Clone)]
pub struct Kde {
    dim: usize,
    points: Vec<f64>,
    bandwidth: Vec<f64>,
    cells: HashMap<Vec<i64>, (usize, usize)>,
}

const KDE_RADIUS: i64 = 7;

impl Kde {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bandwidth(&self) -> &[f64] {
        &self.bandwidth
    }

    fn cell_of(&self, x: &[f64]) -> Vec<i64> {
        x.iter()
            .zip(&self.bandwidth)
            .map(|(v, h)| (v / h).floor() as i64)
            .collect()
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let center = self.cell_of(x);
        let norm: f64 = self
            .bandwidth
            .iter()
            .map(|h| h * (2.0 * PI).sqrt())
            .product();
        let span = (2 * KDE_RADIUS + 1) as usize;
        let mut total = 0.0;
        let mut key = vec![0i64; d];
        for idx in 0..span.pow(d as u32) {
            let mut r = idx;
            for k in 0..d {
                key[k] = center[k] + (r % span) as i64 - KDE_RADIUS;
                r /= span;
            }
            let Some(&(start, len)) = self.cells.get(&key) else {
                continue;
            };
            for p in self.points[start * d..(start + len) * d].chunks_exact(d) {
                let e: f64 = (0..d)
                    .map(|k| ((x[k] - p[k]) / self.bandwidth[k]).powi(2))
                    .sum();
                total += (-0.5 * e).exp();
            }
        }
        total / (norm * self.len() as f64)
    }

    /// Exact KDE mass of the box `[lower, upper]`.
    pub fn mass_in_box(&self, lower: &[f64], upper: &[f64]) -> f64 {
        let d = self.dim;
        let phi = |z: f64| 0.5 * erfc(-z * FRAC_1_SQRT_2);
        let sum: f64 = self
            .points
            .chunks_exact(d)
            .map(|p| {
                (0..d)
                    .map(|k| {
                        phi((upper[k] - p[k]) / self.bandwidth[k])
                            - phi((lower[k] - p[k]) / self.bandwidth[k])
                    })
                    .product::<f64>()
            })
            .sum();
        sum / self.len() as f64
    }

    /// Smallest box containing every sample.
    pub fn hull(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for p in self.points.chunks_exact(self.dim) {
            for k in 0..self.dim {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }
}

/// Density of the multivariate limit `Z`.
#[derive(Debug, Clone)]
pub enum StableDensityModel {
    /// Independent coordinates.
    Product(Vec<StableMarginal>),
    /// Kernel estimate from rescaled sums.
    Kde(Kde),
}

impl StableDensityModel {
    /// Product model for a law with independent coordinates.
    pub fn product_for_law(law: &LatticeLaw) -> Result<Self> {
        match law.family() {
            Family::IndependentProduct(_) => {}
            Family::DeterministicStep(_) => {
                return Err(Error::Precondition("deterministic steps have no non-degenerate limit".into()))
            }
            _ => {
                return Err(Error::UnsupportedFamily(
                    "product limit density needs independent coordinates; fit a kernel estimate instead".into(),
                ))
            }
        }
        let marginals = (0..law.dim())
            .map(|i| StableMarginal::for_coordinate(law, i))
            .collect::<Result<_>>()?;
        Ok(StableDensityModel::Product(marginals))
    }

    pub fn dim(&self) -> usize {
        match self {
            StableDensityModel::Product(m) => m.len(),
            StableDensityModel::Kde(k) => k.dim(),
        }
    }

    pub fn density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        match self {
            StableDensityModel::Product(m) => {
                let mut v = 1.0;
                for (marg, &z) in m.iter().zip(x) {
                    v *= marg.density(z)?;
                    if v == 0.0 {
                        break;
                    }
                }
                Ok(v)
            }
            StableDensityModel::Kde(k) => Ok(k.density(x)),
        }
    }
}

/// Robust spread: `min(sd, IQR / 1.34)`.
fn robust_scale(values: &mut [f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    values.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(values, 0.75) - quantile_sorted(values, 0.25);
    let robust = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if robust > 0.0 {
        robust
    } else {
        1.0
    }
}

/// Gaussian KDE with per-coordinate bandwidth `0.9 s N^{-1/(d+4)}`.
pub fn empirical_density_fit(samples: &[Vec<f64>]) -> Result<StableDensityModel> {
    if samples.len() < MIN_KDE_SAMPLES {
        return Err(Error::Accuracy {
            requested: MIN_KDE_SAMPLES as f64,
            achieved: samples.len() as f64,
        });
    }
    let dim = samples[0].len();
    if dim == 0 {
        return Err(invalid("samples must have at least one coordinate"));
    }
    if let Some(bad) = samples.iter().find(|s| s.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    if samples.iter().flatten().any(|v| !v.is_finite()) {
        return Err(invalid("samples must be finite"));
    }
    let n = samples.len();
    let factor = 0.9 * (n as f64).powf(-1.0 / (dim as f64 + 4.0));
    let bandwidth: Vec<f64> = (0..dim)
        .map(|k| {
            let mut col: Vec<f64> = samples.iter().map(|s| s[k]).collect();
            factor * robust_scale(&mut col)
        })
        .collect();
    let key_of = |s: &[f64]| -> Vec<i64> {
        s.iter()
            .zip(&bandwidth)
            .map(|(v, h)| (v / h).floor() as i64)
            .collect()
    };
    let mut keyed: Vec<(Vec<i64>, usize)> = samples
        .iter()
        .enumerate()
        .map(|(j, s)| (key_of(s), j))
        .collect();
    keyed.sort();
    let mut points = Vec::with_capacity(n * dim);
    let mut cells = HashMap::new();
    let mut start = 0;
    while start < n {
        let mut end = start;
        while end < n && keyed[end].0 == keyed[start].0 {
            points.extend_from_slice(&samples[keyed[end].1]);
            end += 1;
        }
        cells.insert(keyed[start].0.clone(), (start, end - start));
        start = end;
    }
    Ok(StableDensityModel::Kde(Kde {
        dim,
        points,
        bandwidth,
        cells,
    }))
}

/// Integrates a function sampled on a uniform scan grid over the part of the
/// grid where it is non-negligible.
fn scan_integrate<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, step: f64) -> Result<Quad> {
    let n = ((hi - lo) / step).ceil() as usize;
    let values: Vec<f64> = (0..=n).map(|k| f(lo + k as f64 * step)).collect();
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(invalid("integrand is not finite and nonnegative"));
    }
    let peak = values.iter().cloned().fold(0.0, f64::max);
    if peak == 0.0 {
        return Ok(Quad {
            value: 0.0,
            error: 0.0,
        });
    }
    let cut = peak * 1e-18;
    let first = values
        .iter()
        .position(|&v| v > cut)
        .unwrap_or(0)
        .saturating_sub(1);
    let last = (values.iter().rposition(|&v| v > cut).unwrap_or(n) + 1).min(n);
    let edge = values[first].max(values[last]);
    let panels: Vec<f64> = (first..=last).map(|k| lo + k as f64 * step).collect();
    let q = integrate_panels(&f, &panels, 0.0, 1e-9);
    Ok(Quad {
        value: q.value,
        error: q.error + 10.0 * edge * step,
    })
}

/// `int_0^inf u^{-2 + sum 1/alpha_i} g(t_1 u^{1/alpha_1}, ...) du`.
pub fn srt_constant_centered(
    model: &StableDensityModel,
    t: &[f64],
    alphas: &[f64],
) -> Result<Quad> {
    let d = model.dim();
    if t.len() != d || alphas.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: t.len().min(alphas.len()),
        });
    }
    let s_total: f64 = alphas.iter().map(|a| 1.0 / a).sum();
    if s_total <= 1.0 {
        return Err(Error::TransienceViolation(format!(
            "sum of 1/alpha_i = {s_total} <= 1: the integral diverges at 0"
        )));
    }
    if t.iter().all(|&v| v == 0.0) {
        return Err(invalid(
            "direction t = 0 makes the integral diverge at infinity",
        ));
    }
    if let StableDensityModel::Product(m) = model {
        for (marg, &a) in m.iter().zip(alphas) {
            if marg.alpha != a {
                return Err(invalid(format!(
                    "model index {} does not match requested alpha {a}",
                    marg.alpha
                )));
            }
        }
    }
    let point = |s: f64| -> Vec<f64> {
        t.iter()
            .zip(alphas)
            .map(|(ti, a)| ti * (s / a).exp())
            .collect()
    };
    let f = |s: f64| (s * (s_total - 1.0)).exp() * model.density(&point(s)).unwrap_or(f64::NAN);
    let lo = -(40.0 / (s_total - 1.0)).min(4000.0);
    let q = scan_integrate(f, lo, 200.0, 0.5)?;
    // analytic tail below the scan: density near 0 times exp(s (S-1)) / (S-1)
    let tail = f(lo) / (s_total - 1.0);
    Ok(Quad {
        value: q.value + tail,
        error: q.error + tail,
    })
}

fn line_integral(model: &StableDensityModel, t: &[f64], dir: &[f64]) -> Result<Quad> {
    let d = model.dim();
    if t.len() != d || dir.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: t.len().min(dir.len()),
        });
    }
    let scale = dir.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(invalid(
            "direction vector is zero: the line integral diverges",
        ));
    }
    let u0 = 1.0 / scale;
    let f = |w: f64| {
        let u = u0 * w.sinh();
        let x: Vec<f64> = t.iter().zip(dir).map(|(ti, k)| ti + k * u).collect();
        model.density(&x).unwrap_or(f64::NAN) * u0 * w.cosh()
    };
    scan_integrate(f, -60.0, 60.0, 0.125)
}

/// `int g(t + kappa u) du` over the real line (drift regime).
pub fn srt_constant_mean(model: &StableDensityModel, t: &[f64], kappa: &[f64]) -> Result<Quad> {
    line_integral(model, t, kappa)
}

/// `int g(t + kappa_tilde u) du` over the real line (`alpha = 1` drift regime).
pub fn srt_constant_cauchy(
    model: &StableDensityModel,
    t: &[f64],
    kappa_tilde: &[f64],
) -> Result<Quad> {
    line_integral(model, t, kappa_tilde)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn levy() -> StableMarginal {
        StableMarginal::new(0.5, 1.0, 0.0).unwrap()
    }

    #[test]
    fn closed_forms_at_reference_points() {
        assert!(
            (StableMarginal::gaussian(1.0).unwrap().density(0.0).unwrap() - 0.398_942_280_4).abs()
                < 1e-9
        );
        assert!((levy().density(1.0).unwrap() - 0.5 * (-PI / 4.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn inversion_matches_closed_forms() {
        let cases = [
            StableMarginal::gaussian(1.0).unwrap(),
            StableMarginal::new(1.0, 0.5, 0.5).unwrap(),
            levy(),
        ];
        for m in cases {
            for k in 0..40 {
                let z = -6.0 + 0.31 * k as f64;
                let inv = m.density_by_inversion(z).unwrap();
                let exact = m.density(z).unwrap();
                assert!(
                    (inv.value - exact).abs() < 1e-7,
                    "{m:?} z={z}: {} vs {exact}",
                    inv.value
                );
            }
        }
    }

    #[test]
    fn levy_laplace_transform() {
        // E exp(-s Z) = exp(-Gamma(1/2) sqrt(s)); compare with quadrature of the density.
        for s in [0.5, 1.0, 3.0] {
            let panels: Vec<f64> = (0..=400).map(|k| 1e-3 * 1.05f64.powi(k)).collect();
            let q = integrate_panels(|z| (-s * z).exp() * levy_density(z), &panels, 1e-13, 1e-12);
            assert!((q.value - (-(PI * s).sqrt()).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn skewed_unit_index_density_is_normalized() {
        let m = StableMarginal::new(1.0, 1.0, 0.0).unwrap();
        let panels: Vec<f64> = (-200..=200).map(|k| k as f64 * 0.5).collect();
        let q = integrate_panels(|z| m.density(z).unwrap(), &panels, 1e-10, 1e-9);
        // Tails beyond |z| = 100 carry about 1/100 of mass.
        assert!((q.value - 1.0).abs() < 0.02, "{}", q.value);
        assert!(m.cdf(0.0).unwrap() > 0.0 && m.cdf(0.0).unwrap() < 1.0);
    }

    #[test]
    fn line_integrals_of_gaussians() {
        let g = StableDensityModel::Product(vec![StableMarginal::gaussian(1.0).unwrap(); 2]);
        let v = srt_constant_mean(&g, &[0.0, 0.0], &[1.0, 0.0])
            .unwrap()
            .value;
        assert!((v - 0.398_942_280_4).abs() < 1e-8);
        let v = srt_constant_mean(&g, &[0.0, 1.0], &[1.0, 0.0])
            .unwrap()
            .value;
        assert!((v - 0.398_942_280_4 * (-0.5f64).exp()).abs() < 1e-8);
        let base = srt_constant_mean(&g, &[0.3, -0.2], &[1.0, 0.7])
            .unwrap()
            .value;
        let scaled = srt_constant_mean(&g, &[0.3, -0.2], &[3.0, 2.1])
            .unwrap()
            .value;
        assert!((scaled - base / 3.0).abs() < 1e-9);
        assert!(srt_constant_mean(&g, &[0.0, 0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn centered_constant_for_levy_pair() {
        let model = StableDensityModel::Product(vec![levy(); 2]);
        let c = srt_constant_centered(&model, &[1.0, 1.0], &[0.5, 0.5]).unwrap();
        let exact = 2f64.sqrt() / (8.0 * PI);
        assert!(
            (c.value - exact).abs() < 1e-8 * exact,
            "{} vs {exact}",
            c.value
        );
        let mut prev = f64::INFINITY;
        for t1 in [1.0, 2.0, 4.0, 8.0] {
            let v = srt_constant_centered(&model, &[t1, 1.0], &[0.5, 0.5])
                .unwrap()
                .value;
            assert!(v < prev);
            prev = v;
        }
        let one = StableDensityModel::Product(vec![levy()]);
        assert!(srt_constant_centered(&one, &[1.0], &[2.0]).is_err());
    }

    #[test]
    fn kde_rejects_small_samples() {
        let samples = vec![vec![0.0, 0.0]; 10_000];
        assert!(matches!(
            empirical_density_fit(&samples),
            Err(Error::Accuracy { .. })
        ));
    }
}
