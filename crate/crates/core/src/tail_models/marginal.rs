use std::fmt;

use serde::{Deserialize, Serialize};

use super::slowly::SlowlyVarying;
use crate::error::{invalid, Result};
use crate::numerics::zeta::{hurwitz, power_log_sum, power_sum, zeta};

/// Tail description of one coordinate: `P(X > x) ~ p L(x) x^{-alpha}`,
/// `P(X < -x) ~ q L(x) x^{-alpha}`, together with the envelope
/// `P(|X| > x) <= phi(x) x^{-gamma}`.
///
/// For `alpha = 2` the function `l` describes the truncated second moment
/// `sigma(x)` instead of the tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalTailSpec {
    pub alpha: f64,
    pub gamma: f64,
    pub p: f64,
    pub q: f64,
    pub l: SlowlyVarying,
    pub phi: SlowlyVarying,
}

impl MarginalTailSpec {
    pub fn new(
        alpha: f64,
        gamma: f64,
        p: f64,
        q: f64,
        l: SlowlyVarying,
        phi: SlowlyVarying,
    ) -> Result<Self> {
        let spec = MarginalTailSpec {
            alpha,
            gamma,
            p,
            q,
            l,
            phi,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Power tail with constant slowly varying part.
    pub fn power(alpha: f64, p: f64, c: f64) -> Result<Self> {
        Self::new(
            alpha,
            alpha,
            p,
            1.0 - p,
            SlowlyVarying::constant(c),
            SlowlyVarying::constant(c),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return Err(invalid(format!(
                "alpha must lie in (0, 2], got {}",
                self.alpha
            )));
        }
        if !(self.gamma >= self.alpha) {
            return Err(invalid(format!(
                "gamma {} below alpha {}",
                self.gamma, self.alpha
            )));
        }
        if self.alpha < 2.0 && self.gamma != self.alpha {
            return Err(invalid(
                "for alpha < 2 the envelope exponent gamma must equal alpha",
            ));
        }
        if self.p < 0.0 || self.q < 0.0 || ((self.p + self.q) - 1.0).abs() > 1e-12 {
            return Err(invalid(format!(
                "tail weights need p, q >= 0 and p + q = 1, got {} and {}",
                self.p, self.q
            )));
        }
        self.l.validate()?;
        self.phi.validate()
    }
}

/// One-dimensional marginal laws with closed-form tails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marginal1d {
    /// Support `{1, 2, ...}` with `P(X > k) = (k+1)^{-gamma}`.
    Pareto { gamma: f64 },
    /// `P(X = k) = k^{-s} / zeta(s)` for `k >= 1`.
    Zeta { s: f64 },
    /// Support `Z \ {0}` with `P(X > k) = p w(k)` and `P(X < -k) = (1-p) w(k)`
    /// for `k >= 0`, where `w(k) = (k+1)^{-gamma} (1 + ln(k+1))^rho`.
    TwoSided { gamma: f64, p: f64, rho: f64 },
    /// Uniform on `lo..=hi`.
    Uniform { lo: i64, hi: i64 },
    /// Explicit probabilities on `offset, offset+1, ...`.
    Finite { offset: i64, probs: Vec<f64> },
}

fn log1p_weight(k: f64) -> f64 {
    1.0 + k.ln_1p()
}

impl Marginal1d {
    pub fn validate(&self) -> Result<()> {
        match self {
            Marginal1d::Pareto { gamma } if !(*gamma > 0.0 && gamma.is_finite()) => Err(invalid(
                format!("pareto exponent must be positive, got {gamma}"),
            )),
            Marginal1d::Zeta { s } if !(*s > 1.0 && s.is_finite()) => {
                Err(invalid(format!("zeta law needs s > 1, got {s}")))
            }
            Marginal1d::TwoSided { gamma, p, rho } => {
                if !(*gamma > 0.0 && gamma.is_finite()) {
                    return Err(invalid(format!(
                        "two-sided exponent must be positive, got {gamma}"
                    )));
                }
                if !(0.0..=1.0).contains(p) {
                    return Err(invalid(format!(
                        "two-sided weight p must lie in [0, 1], got {p}"
                    )));
                }
                // rho < gamma keeps the tail strictly decreasing.
                if !(rho.is_finite() && *rho < *gamma) {
                    return Err(invalid(format!(
                        "log exponent rho must be below gamma, got {rho}"
                    )));
                }
                Ok(())
            }
            Marginal1d::Uniform { lo, hi } if hi < lo => Err(invalid("uniform law needs lo <= hi")),
            Marginal1d::Finite { probs, .. } => {
                if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
                    return Err(invalid("finite law needs nonnegative probabilities"));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(invalid(format!(
                        "finite law probabilities sum to {total}, not 1"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// `w(k)` for the power families; `k` may be real and is clamped at 0.
    fn power_weight(&self, k: f64) -> f64 {
        let k = k.max(0.0);
        match *self {
            Marginal1d::Pareto { gamma } => (k + 1.0).powf(-gamma),
            Marginal1d::TwoSided { gamma, rho, .. } => {
                let w = (k + 1.0).powf(-gamma);
                if rho == 0.0 {
                    w
                } else {
                    w * log1p_weight(k).powf(rho)
                }
            }
            _ => unreachable!("power_weight on a non-power family"),
        }
    }

    /// `w(k-1) - w(k)` for integer `k >= 1`, without cancellation.
    fn power_increment(&self, k: i64) -> f64 {
        let (gamma, rho) = match *self {
            Marginal1d::Pareto { gamma } => (gamma, 0.0),
            Marginal1d::TwoSided { gamma, rho, .. } => (gamma, rho),
            _ => unreachable!(),
        };
        let t = k as f64;
        let y = (1.0 / t).ln_1p();
        let ell = 1.0 + t.ln();
        let mut expo = -gamma * y;
        if rho != 0.0 {
            expo += rho * (y / ell).ln_1p();
        }
        t.powf(-gamma) * ell.powf(rho) * -expo.exp_m1()
    }

    /// Smallest and largest support points (`i64::MIN`/`i64::MAX` when unbounded).
    pub fn support(&self) -> (i64, i64) {
        match self {
            Marginal1d::Pareto { .. } | Marginal1d::Zeta { .. } => (1, i64::MAX),
            Marginal1d::TwoSided { p, .. } => {
                let lo = if *p < 1.0 { i64::MIN } else { 1 };
                let hi = if *p > 0.0 { i64::MAX } else { -1 };
                (lo, hi)
            }
            Marginal1d::Uniform { lo, hi } => (*lo, *hi),
            Marginal1d::Finite { offset, probs } => {
                let first = probs.iter().position(|&p| p > 0.0).unwrap_or(0) as i64;
                let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0) as i64;
                (offset + first, offset + last)
            }
        }
    }

    pub fn pmf(&self, k: i64) -> f64 {
        match self {
            Marginal1d::Pareto { .. } => {
                if k >= 1 {
                    self.power_increment(k)
                } else {
                    0.0
                }
            }
            Marginal1d::Zeta { s } => {
                if k >= 1 {
                    (k as f64).powf(-s) / zeta(*s)
                } else {
                    0.0
                }
            }
            Marginal1d::TwoSided { p, .. } => match k {
                0 => 0.0,
                k if k > 0 => p * self.power_increment(k),
                k => (1.0 - p) * self.power_increment(k.saturating_neg()),
            },
            Marginal1d::Uniform { lo, hi } => {
                if (*lo..=*hi).contains(&k) {
                    1.0 / (hi - lo + 1) as f64
                } else {
                    0.0
                }
            }
            Marginal1d::Finite { offset, probs } => {
                let i = k.wrapping_sub(*offset);
                if k >= *offset && (i as usize) < probs.len() {
                    probs[i as usize]
                } else {
                    0.0
                }
            }
        }
    }

    /// `P(X > a)` for real `a`. Exact at integers; the power families
    /// interpolate smoothly between integers through their closed forms.
    pub fn upper_tail(&self, a: f64) -> f64 {
        match self {
            Marginal1d::Pareto { .. } => {
                if a < 0.0 {
                    1.0
                } else {
                    self.power_weight(a)
                }
            }
            Marginal1d::Zeta { s } => {
                if a < 0.0 {
                    1.0
                } else {
                    hurwitz(*s, a + 1.0) / zeta(*s)
                }
            }
            Marginal1d::TwoSided { p, .. } => {
                if a >= 0.0 {
                    p * self.power_weight(a)
                } else {
                    1.0 - self.lower_tail(-a)
                }
            }
            Marginal1d::Uniform { .. } | Marginal1d::Finite { .. } => {
                let (lo, hi) = self.support();
                let start = if a < lo as f64 {
                    lo
                } else {
                    (a.floor() as i64).saturating_add(1)
                };
                (start..=hi).map(|k| self.pmf(k)).sum()
            }
        }
    }

    /// `P(X <= -b)` for real `b >= 0`.
    pub fn lower_tail(&self, b: f64) -> f64 {
        match self {
            Marginal1d::Pareto { .. } | Marginal1d::Zeta { .. } => {
                if b > 0.0 {
                    0.0
                } else {
                    1.0 - self.upper_tail(-b)
                }
            }
            Marginal1d::TwoSided { p, .. } => (1.0 - p) * self.power_weight(b - 1.0),
            Marginal1d::Uniform { .. } | Marginal1d::Finite { .. } => {
                let (lo, hi) = self.support();
                let end = (-b).floor() as i64;
                (lo..=end.min(hi)).map(|k| self.pmf(k)).sum()
            }
        }
    }

    pub fn two_sided_tail(&self, a: f64) -> f64 {
        self.upper_tail(a) + self.lower_tail(a.max(f64::MIN_POSITIVE))
    }

    /// Mean when `E|X| < inf`.
    pub fn mean(&self) -> Option<f64> {
        match self {
            Marginal1d::Pareto { gamma } => (*gamma > 1.0).then(|| zeta(*gamma)),
            Marginal1d::Zeta { s } => (*s > 2.0).then(|| zeta(s - 1.0) / zeta(*s)),
            Marginal1d::TwoSided { gamma, p, rho } => {
                (*gamma > 1.0).then(|| (2.0 * p - 1.0) * power_log_sum(*gamma, *rho, 1, None))
            }
            Marginal1d::Uniform { lo, hi } => Some(0.5 * (*lo as f64 + *hi as f64)),
            Marginal1d::Finite { offset, probs } => Some(
                probs
                    .iter()
                    .enumerate()
                    .map(|(i, p)| p * (*offset + i as i64) as f64)
                    .sum(),
            ),
        }
    }

    /// `E[X^2]` when finite.
    pub fn second_moment(&self) -> Option<f64> {
        match self {
            Marginal1d::Pareto { gamma } => {
                (*gamma > 2.0).then(|| 2.0 * zeta(gamma - 1.0) - zeta(*gamma))
            }
            Marginal1d::Zeta { s } => (*s > 3.0).then(|| zeta(s - 2.0) / zeta(*s)),
            Marginal1d::TwoSided { gamma, rho, .. } => (*gamma > 2.0).then(|| {
                2.0 * power_log_sum(gamma - 1.0, *rho, 1, None)
                    - power_log_sum(*gamma, *rho, 1, None)
            }),
            Marginal1d::Uniform { .. } | Marginal1d::Finite { .. } => {
                let (lo, hi) = self.support();
                Some(
                    (lo..=hi)
                        .map(|k| self.pmf(k) * (k as f64) * (k as f64))
                        .sum(),
                )
            }
        }
    }

    /// `(E[X 1{|X| <= x}], E[X^2 1{|X| <= x}])` by exact summation.
    pub fn truncated_moments(&self, x: f64) -> (f64, f64) {
        if x < 1.0 {
            return (0.0, 0.0);
        }
        let m = if x >= 9.0e18 {
            u64::MAX / 2
        } else {
            x.floor() as u64
        };
        let mf = m as f64;
        match self {
            Marginal1d::Pareto { gamma } => {
                let w = self.power_weight(mf);
                let s0 = power_sum(*gamma, m);
                let s1 = power_sum(gamma - 1.0, m);
                (s0 - mf * w, 2.0 * s1 - s0 - mf * mf * w)
            }
            Marginal1d::Zeta { s } => {
                let z = zeta(*s);
                (power_sum(s - 1.0, m) / z, power_sum(s - 2.0, m) / z)
            }
            Marginal1d::TwoSided { gamma, p, rho } => {
                let w = self.power_weight(mf);
                let s0 = power_log_sum(*gamma, *rho, 1, Some(m));
                let s1 = power_log_sum(gamma - 1.0, *rho, 1, Some(m));
                ((2.0 * p - 1.0) * (s0 - mf * w), 2.0 * s1 - s0 - mf * mf * w)
            }
            Marginal1d::Uniform { .. } | Marginal1d::Finite { .. } => {
                let (lo, hi) = self.support();
                let m = m.min(i64::MAX as u64) as i64;
                let (mut mu, mut sigma) = (0.0, 0.0);
                for k in lo.max(-m)..=hi.min(m) {
                    let p = self.pmf(k);
                    mu += p * k as f64;
                    sigma += p * (k as f64) * (k as f64);
                }
                (mu, sigma)
            }
        }
    }

    /// Tail specification derived from the closed form.
    pub fn tail_spec(&self) -> MarginalTailSpec {
        let log_power = |c: f64, rho: f64| {
            if rho == 0.0 {
                SlowlyVarying::constant(c)
            } else {
                SlowlyVarying::LogPower { c, rho }
            }
        };
        let finite_variance = |m2: f64| MarginalTailSpec {
            alpha: 2.0,
            gamma: f64::INFINITY,
            p: 0.5,
            q: 0.5,
            l: SlowlyVarying::constant(m2),
            phi: SlowlyVarying::constant(1.0),
        };
        match self {
            Marginal1d::Pareto { gamma } => {
                power_family_spec(*gamma, 1.0, 0.0, 1.0, self.second_moment())
            }
            Marginal1d::Zeta { s } => {
                let gamma = s - 1.0;
                let c = 1.0 / (gamma * zeta(*s));
                if gamma < 2.0 {
                    MarginalTailSpec {
                        alpha: gamma,
                        gamma,
                        p: 1.0,
                        q: 0.0,
                        l: SlowlyVarying::constant(c),
                        phi: SlowlyVarying::constant(c),
                    }
                } else if gamma == 2.0 {
                    MarginalTailSpec {
                        alpha: 2.0,
                        gamma,
                        p: 1.0,
                        q: 0.0,
                        l: SlowlyVarying::LogPower {
                            c: 1.0 / zeta(*s),
                            rho: 1.0,
                        },
                        phi: SlowlyVarying::constant(c),
                    }
                } else {
                    let mut spec = finite_variance(self.second_moment().unwrap_or(1.0));
                    spec.gamma = gamma;
                    spec.p = 1.0;
                    spec.q = 0.0;
                    spec.phi = SlowlyVarying::constant(c);
                    spec
                }
            }
            Marginal1d::TwoSided { gamma, p, rho } => {
                let mut spec = power_family_spec(*gamma, *p, *rho, 1.0, self.second_moment());
                if *gamma < 2.0 {
                    spec.l = log_power(1.0, *rho);
                }
                spec.phi = log_power(1.0, *rho);
                spec
            }
            Marginal1d::Uniform { .. } | Marginal1d::Finite { .. } => {
                finite_variance(self.second_moment().unwrap_or(0.0))
            }
        }
    }
}

/// Spec for a tail `c (x+1)^{-gamma} (1 + ln x)^rho` split with weight `p`.
fn power_family_spec(
    gamma: f64,
    p: f64,
    rho: f64,
    c: f64,
    second_moment: Option<f64>,
) -> MarginalTailSpec {
    let lp = |c: f64, rho: f64| {
        if rho == 0.0 {
            SlowlyVarying::constant(c)
        } else {
            SlowlyVarying::LogPower { c, rho }
        }
    };
    let (alpha, l) = if gamma < 2.0 {
        (gamma, lp(c, rho))
    } else if gamma == 2.0 && rho > -1.0 {
        // sigma(x) ~ 2 c (ln x)^{rho+1} / (rho+1)
        (2.0, lp(2.0 * c / (rho + 1.0), rho + 1.0))
    } else {
        (2.0, SlowlyVarying::constant(second_moment.unwrap_or(1.0)))
    };
    MarginalTailSpec {
        alpha,
        gamma,
        p,
        q: 1.0 - p,
        l,
        phi: lp(c, rho),
    }
}

impl fmt::Display for Marginal1d {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Marginal1d::Pareto { gamma } => write!(f, "pareto({gamma})"),
            Marginal1d::Zeta { s } => write!(f, "zeta({s})"),
            Marginal1d::TwoSided { gamma, p, rho } => write!(f, "twosided({gamma},{p},{rho})"),
            Marginal1d::Uniform { lo, hi } => write!(f, "uniform({lo},{hi})"),
            Marginal1d::Finite { offset, probs } => {
                write!(f, "finite({offset}")?;
                for p in probs {
                    write!(f, ",{p}")?;
                }
                write!(f, ")")
            }
        }
    }
}
