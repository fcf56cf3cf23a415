//! Normalizing sequences `a_n`, recentering `b_n`, typical step counts and
//! the favorite-direction geometry of a target point.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::numerics::root::bisect_predicate;
use crate::tail_models::{Family, LatticeLaw};

const A_CAP: f64 = 4.611_686_018_427_388e18; // 2^62
const N_CAP: f64 = 4.611_686_018_427_388e18;
const SOLVE_TOL: f64 = 1e-10;

/// Where `a_n` reads the tail from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TailSource {
    /// The law's exact tail (`alpha < 2`) or exact truncated second moment.
    Exact,
    /// The tail spec's slowly varying function: `L(a) a^{-alpha}` or `sigma(a) = L(a)`.
    Symbolic,
}

/// Per-coordinate evaluators for `a_n` and `b_n`.
#[derive(Debug)]
pub struct ScalingSchedule {
    law: Arc<LatticeLaw>,
    sources: Vec<TailSource>,
    cache: Mutex<HashMap<(usize, u64), f64>>,
}

/// Which sharp regime a target falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// All coordinates centered (`b_n = 0`).
    Centered,
    /// Leading drifting coordinate has `alpha > 1`.
    Drift,
    /// Leading drifting coordinate has `alpha = 1`.
    CauchyDrift,
}

/// Typical step counts and favorite-direction data for a target `x`.
#[derive(Debug, Clone, Serialize)]
pub struct FavoriteGeometry {
    pub x: Vec<i64>,
    pub regime: Regime,
    /// Leading coordinate.
    pub i0: usize,
    /// `n_i` per coordinate; `NaN` for a centered coordinate with `x_i = 0`.
    pub n: Vec<f64>,
    /// `n_{i0}`.
    pub n0: f64,
    /// Offsets `(x_i - b_{n0}) / a_{n0}`.
    pub t: Vec<f64>,
    /// Window scale `a_{n0}^(i0) / |mu_{i0}(a_{n0}^(i0))|` (drift regimes).
    pub window: Option<f64>,
    pub a_at_n0: Vec<f64>,
    /// `ratios[i][j] = a_{n0}^(j) / a_{n0}^(i)`, and the same at `2 n0`.
    pub ratios: Vec<Vec<f64>>,
    pub ratios_2n0: Vec<Vec<f64>>,
    /// Line direction for the drift regime: `mu_i a^(i0)/a^(i)` for `i >= i0`.
    pub kappa: Vec<f64>,
    pub kappa_2n0: Vec<f64>,
    /// Line direction for the `alpha = 1` drift regime (finite-n estimate).
    pub kappa_tilde: Vec<f64>,
    pub kappa_tilde_2n0: Vec<f64>,
}

/// Outcome of the recentering and truncated-mean regularity checks.
#[derive(Debug, Clone, Serialize)]
pub struct ClaimReport {
    pub coordinate: usize,
    /// `(n, d_n, a_n)` with `d_n = floor(b_n)/2 - b_{floor(n/2)}`.
    pub dn: Vec<(u64, f64, f64)>,
    /// `max(-d_n / a_n)` over the grid.
    pub max_negative_ratio: f64,
    /// `max |mu(u) - mu(v)| / (L(v) (u/v)^delta)` over grid pairs (alpha = 1 only).
    pub mu_ratio_max: Option<f64>,
    pub delta: f64,
}

impl ScalingSchedule {
    pub fn new(law: Arc<LatticeLaw>) -> Self {
        let default = match law.family() {
            Family::DependentNorm(_) => TailSource::Symbolic,
            _ => TailSource::Exact,
        };
        let sources = vec![default; law.dim()];
        ScalingSchedule {
            law,
            sources,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_source(mut self, source: TailSource) -> Self {
        self.sources.iter_mut().for_each(|s| *s = source);
        self.cache.lock().expect("cache").clear();
        self
    }

    pub fn law(&self) -> &LatticeLaw {
        &self.law
    }

    pub fn law_arc(&self) -> Arc<LatticeLaw> {
        Arc::clone(&self.law)
    }

    pub fn dim(&self) -> usize {
        self.law.dim()
    }

    fn alpha(&self, i: usize) -> f64 {
        self.law.marginal_spec(i).alpha
    }

    /// Truncated second moment used by the `alpha = 2` equation.
    fn sigma(&self, i: usize, a: f64) -> f64 {
        match self.sources[i] {
            TailSource::Exact => self.law.truncated_moments(i, a).1,
            TailSource::Symbolic => self.law.marginal_spec(i).l.eval(a),
        }
    }

    fn tail(&self, i: usize, a: f64) -> f64 {
        let spec = self.law.marginal_spec(i);
        match self.sources[i] {
            TailSource::Exact => self.law.two_sided_tail(i, a),
            TailSource::Symbolic => spec.l.eval(a) * a.powf(-spec.alpha),
        }
    }

    /// `a_n^(i)` for real `n >= 1`.
    pub fn a_n(&self, i: usize, n: f64) -> Result<f64> {
        if !(n >= 1.0) {
            return Err(invalid(format!("a_n needs n >= 1, got {n}")));
        }
        let key = (i, n.to_bits());
        if let Some(&a) = self.cache.lock().expect("cache").get(&key) {
            return Ok(a);
        }
        let a = if self.alpha(i) < 2.0 {
            bisect_predicate(|a| n * self.tail(i, a) <= 1.0, 1.0, A_CAP, SOLVE_TOL)
        } else {
            bisect_predicate(|a| n * self.sigma(i, a) <= a * a, 1.0, A_CAP, SOLVE_TOL)
        }
        .map_err(|e| Error::Overflow(format!("a_n for coordinate {i} at n = {n}: {e}")))?;
        self.cache.lock().expect("cache").insert(key, a);
        Ok(a)
    }

    /// `mu_i(x) = E[X^(i) 1{|X^(i)| <= x}]`.
    pub fn truncated_mean(&self, i: usize, x: f64) -> f64 {
        self.law.truncated_moments(i, x).0
    }

    /// `b_n^(i)`.
    pub fn b_n(&self, i: usize, n: f64) -> Result<f64> {
        let alpha = self.alpha(i);
        if alpha < 1.0 {
            Ok(0.0)
        } else if alpha > 1.0 {
            let mu = self.law.mean(i).ok_or_else(|| {
                invalid(format!("coordinate {i} has alpha > 1 but no finite mean"))
            })?;
            Ok(n * mu)
        } else {
            let a = self.a_n(i, n)?;
            Ok(n * self.truncated_mean(i, a))
        }
    }

    /// Sign of the drift of coordinate `i`, or `None` when `b_n = 0`.
    pub fn drift_sign(&self, i: usize) -> Option<f64> {
        let alpha = self.alpha(i);
        let mu = if alpha < 1.0 {
            0.0
        } else if alpha > 1.0 {
            self.law.mean(i).unwrap_or(0.0)
        } else {
            self.truncated_mean(i, 1e9)
        };
        (mu.abs() > 1e-12).then(|| mu.signum())
    }

    /// `n` with `b_n = x` (drift) or `a_n = |x|` (centered); `NaN` for a
    /// centered coordinate with `x = 0`.
    pub fn typical_n_coord(&self, i: usize, x: i64) -> Result<f64> {
        match self.drift_sign(i) {
            Some(sign) => {
                if x == 0 || (x as f64).signum() != sign {
                    return Err(Error::NoTypicalTime(format!(
                        "coordinate {i} drifts with sign {sign} but target is {x}"
                    )));
                }
                let target = (x as f64).abs();
                bisect_predicate(
                    |n| self.b_n(i, n).map(|b| b.abs() >= target).unwrap_or(true),
                    1.0,
                    N_CAP,
                    SOLVE_TOL,
                )
            }
            None => {
                if x == 0 {
                    return Ok(f64::NAN);
                }
                let target = (x as f64).abs();
                bisect_predicate(
                    |n| self.a_n(i, n).map(|a| a >= target).unwrap_or(true),
                    1.0,
                    N_CAP,
                    SOLVE_TOL,
                )
            }
        }
        .map_err(|e| Error::NoTypicalTime(format!("coordinate {i}, target {x}: {e}")))
    }

    fn ratio_matrix(a: &[f64]) -> Vec<Vec<f64>> {
        a.iter()
            .map(|ai| a.iter().map(|aj| aj / ai).collect())
            .collect()
    }

    fn directions(&self, n0: f64, i0: usize, a: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let d = self.dim();
        let mut kappa = vec![0.0; d];
        let mut kappa_tilde = vec![0.0; d];
        let a0 = a[i0];
        let mu0 = self.truncated_mean(i0, a0);
        for i in i0..d {
            let alpha = self.alpha(i);
            let mu_i = if alpha > 1.0 {
                self.law.mean(i).unwrap_or(0.0)
            } else if alpha == 1.0 {
                self.truncated_mean(i, a[i])
            } else {
                0.0
            };
            kappa[i] = mu_i * a0 / a[i];
            if alpha >= 1.0 && mu0 != 0.0 {
                kappa_tilde[i] = (a0 / mu0) * (self.truncated_mean(i, a[i]) / a[i]);
            }
        }
        let _ = n0;
        Ok((kappa, kappa_tilde))
    }

    /// Typical times, regime and favorite-direction data for target `x`.
    pub fn typical_n(&self, x: &[i64]) -> Result<FavoriteGeometry> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
        if x.iter().all(|&v| v == 0) {
            return Err(Error::NoTypicalTime("target must be nonzero".into()));
        }
        let n: Vec<f64> = (0..d)
            .map(|i| self.typical_n_coord(i, x[i]))
            .collect::<Result<_>>()?;
        let drifting: Vec<usize> = (0..d).filter(|&i| self.drift_sign(i).is_some()).collect();
        let (regime, i0) = match drifting.first() {
            Some(&i) if self.alpha(i) > 1.0 => (Regime::Drift, i),
            Some(&i) => (Regime::CauchyDrift, i),
            None => {
                let i0 = (0..d)
                    .filter(|&i| !n[i].is_nan())
                    .min_by(|&a, &b| n[a].total_cmp(&n[b]))
                    .expect("some coordinate is nonzero");
                (Regime::Centered, i0)
            }
        };
        let n0 = n[i0];
        let a: Vec<f64> = (0..d).map(|i| self.a_n(i, n0)).collect::<Result<_>>()?;
        let a2: Vec<f64> = (0..d)
            .map(|i| self.a_n(i, 2.0 * n0))
            .collect::<Result<_>>()?;
        let t: Vec<f64> = (0..d)
            .map(|i| Ok((x[i] as f64 - self.b_n(i, n0)?) / a[i]))
            .collect::<Result<_>>()?;
        let window =
            (regime != Regime::Centered).then(|| a[i0] / self.truncated_mean(i0, a[i0]).abs());
        let (kappa, kappa_tilde) = self.directions(n0, i0, &a)?;
        let (kappa_2n0, kappa_tilde_2n0) = self.directions(2.0 * n0, i0, &a2)?;
        Ok(FavoriteGeometry {
            x: x.to_vec(),
            regime,
            i0,
            n,
            n0,
            t,
            window,
            ratios: Self::ratio_matrix(&a),
            ratios_2n0: Self::ratio_matrix(&a2),
            a_at_n0: a,
            kappa,
            kappa_2n0,
            kappa_tilde,
            kappa_tilde_2n0,
        })
    }

    /// `x_i = round(b_n^(i) + t_i a_n^(i))`.
    pub fn favorite_point(&self, n: f64, t: &[f64]) -> Result<Vec<i64>> {
        if t.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: t.len(),
            });
        }
        (0..self.dim())
            .map(|i| Ok((self.b_n(i, n)? + t[i] * self.a_n(i, n)?).round() as i64))
            .collect()
    }

    /// Recentering and truncated-mean regularity checks on `n_grid`.
    pub fn claim_checks(&self, i: usize, n_grid: &[u64], delta: f64) -> Result<ClaimReport> {
        let mut dn = Vec::with_capacity(n_grid.len());
        let mut worst = f64::NEG_INFINITY;
        for &n in n_grid {
            if n < 2 {
                return Err(invalid("claim checks need n >= 2"));
            }
            let b = self.b_n(i, n as f64)?;
            let b_half = self.b_n(i, (n / 2) as f64)?;
            let a = self.a_n(i, n as f64)?;
            let d = 0.5 * b.floor() - b_half;
            worst = worst.max(-d / a);
            dn.push((n, d, a));
        }
        let mu_ratio_max = (self.alpha(i) == 1.0).then(|| {
            let top = n_grid
                .iter()
                .map(|&n| self.a_n(i, n as f64).unwrap_or(1.0))
                .fold(1.0, f64::max);
            let mut pts = vec![1.0f64];
            while *pts.last().unwrap() * 2.0 <= top {
                let next = pts.last().unwrap() * 2.0;
                pts.push(next);
            }
            let l = &self.law.marginal_spec(i).l;
            let mut best: f64 = 0.0;
            for (k, &v) in pts.iter().enumerate() {
                let mv = self.truncated_mean(i, v);
                for &u in &pts[k..] {
                    let r =
                        (self.truncated_mean(i, u) - mv).abs() / (l.eval(v) * (u / v).powf(delta));
                    best = best.max(r);
                }
            }
            best
        });
        Ok(ClaimReport {
            coordinate: i,
            dn,
            max_negative_ratio: worst,
            mu_ratio_max,
            delta,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tail_models::{Marginal1d, MarginalTailSpec, SlowlyVarying};

    fn pareto_pair() -> Arc<LatticeLaw> {
        Arc::new(LatticeLaw::independent(vec![Marginal1d::Pareto { gamma: 0.5 }; 2]).unwrap())
    }

    #[test]
    fn exact_tail_gives_n_squared_minus_one() {
        let s = ScalingSchedule::new(pareto_pair());
        for n in [10.0, 100.0, 1000.0] {
            let a = s.a_n(0, n).unwrap();
            assert!((a - (n * n - 1.0)).abs() <= 1e-8 * n * n, "n={n}: {a}");
        }
    }

    #[test]
    fn symbolic_tail_gives_n_squared() {
        let s = ScalingSchedule::new(pareto_pair()).with_source(TailSource::Symbolic);
        assert!((s.a_n(0, 100.0).unwrap() - 10000.0).abs() < 1e-5);
    }

    #[test]
    fn finite_variance_scale() {
        let law = LatticeLaw::independent(vec![Marginal1d::Uniform { lo: -2, hi: 2 }]).unwrap();
        let law = law
            .with_marginal_spec(
                0,
                MarginalTailSpec {
                    alpha: 2.0,
                    gamma: f64::INFINITY,
                    p: 0.5,
                    q: 0.5,
                    l: SlowlyVarying::constant(4.0),
                    phi: SlowlyVarying::constant(1.0),
                },
            )
            .unwrap();
        let s = ScalingSchedule::new(Arc::new(law)).with_source(TailSource::Symbolic);
        assert!((s.a_n(0, 1e6).unwrap() - 2000.0).abs() < 1e-5);
    }

    #[test]
    fn recentering_cases() {
        let s = ScalingSchedule::new(pareto_pair());
        assert_eq!(s.b_n(0, 1e6).unwrap(), 0.0);
        let law = LatticeLaw::independent(vec![Marginal1d::Finite {
            offset: 1,
            probs: vec![0.0, 1.0, 0.0],
        }])
        .unwrap();
        let s = ScalingSchedule::new(Arc::new(law));
        assert_eq!(s.b_n(0, 500.0).unwrap(), 1000.0);
    }

    #[test]
    fn drift_typical_times() {
        let law = LatticeLaw::independent(vec![
            Marginal1d::Uniform { lo: 1, hi: 3 },
            Marginal1d::Uniform { lo: 2, hi: 4 },
        ])
        .unwrap();
        let s = ScalingSchedule::new(Arc::new(law));
        let g = s.typical_n(&[1000, 1500]).unwrap();
        assert_eq!(g.regime, Regime::Drift);
        assert_eq!(g.i0, 0);
        assert!((g.n[0] - 500.0).abs() < 1e-6 && (g.n[1] - 500.0).abs() < 1e-6);
        assert!(g.t.iter().all(|t| t.abs() < 1e-6));
        assert!(s.typical_n(&[-5, 10]).is_err());
    }

    #[test]
    fn centered_typical_times() {
        let s = ScalingSchedule::new(pareto_pair()).with_source(TailSource::Symbolic);
        let g = s.typical_n(&[100, 400]).unwrap();
        assert_eq!(g.regime, Regime::Centered);
        assert!((g.n[0] - 10.0).abs() < 1e-6 && (g.n[1] - 20.0).abs() < 1e-6);
        assert_eq!(g.i0, 0);
    }

    #[test]
    fn half_stable_recentering_vanishes() {
        let s = ScalingSchedule::new(pareto_pair());
        let r = s.claim_checks(0, &[2, 3, 16, 1000], 0.1).unwrap();
        assert!(r.dn.iter().all(|&(_, d, _)| d == 0.0));
        assert!(r.mu_ratio_max.is_none());
    }
}
