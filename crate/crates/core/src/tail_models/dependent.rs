use std::sync::{Arc, Mutex};

use statrs::function::gamma::{gamma, ln_gamma};

use super::marginal::MarginalTailSpec;
use super::slowly::SlowlyVarying;
use crate::error::{invalid, Error, Result};
use crate::numerics::quad::integrate;
use crate::numerics::zeta::hurwitz_with_error;

const DIRECT_TERMS: u64 = 2048;
/// Prefix tables of truncated moments are kept up to this many points.
const MOMENT_TABLE_CAP: usize = 1 << 20;

/// `P(X = x) = c0 psi(s) s^{-beta}` with `s = sum_i x_i^{beta_i}` on `{1, 2, ...}^d`.
#[derive(Debug, Clone)]
pub struct DependentNorm {
    beta: f64,
    betas: Vec<f64>,
    psi: SlowlyVarying,
    c0: f64,
    c0_rel_error: f64,
    moments: Arc<Vec<Mutex<Vec<(f64, f64)>>>>,
}

/// Sum over `s >= start` (step 1) of a smooth, eventually decreasing `f`
/// whose decay is at least `t^{-decay}`: a direct head plus an
/// Euler-Maclaurin corrected integral for the rest. Returns the value and
/// an error estimate.
pub(crate) fn smooth_series(f: &dyn Fn(f64) -> f64, start: f64, decay: f64) -> (f64, f64) {
    let mut head = 0.0;
    for k in 0..DIRECT_TERMS {
        head += f(start + k as f64);
    }
    let c = start + DIRECT_TERMS as f64;
    let span = 80.0 / (decay - 1.0).max(0.05) + 5.0;
    let lo = c.ln();
    let q = integrate(
        |u: f64| {
            let t = u.exp();
            f(t) * t
        },
        lo,
        lo + span,
        0.0,
        1e-13,
    );
    let h = 1e-3 * c;
    let fp = (f(c + h) - f(c - h)) / (2.0 * h);
    let fc = f(c);
    let tail = q.value + 0.5 * fc - fp / 12.0;
    // next Euler-Maclaurin term scales like f'''(c)/720 ~ f(c) decay^3 / (720 c^3)
    let err = q.error
        + fc.abs() * (decay + 3.0).powi(3) / (720.0 * c * c * c)
        + (head + tail).abs() * 1e-15;
    (head + tail, err)
}

/// Coefficients (ascending powers of `s`) of `binom(s - shift, k)`.
fn binomial_poly(shift: f64, k: usize) -> Vec<f64> {
    let mut poly = vec![1.0];
    for j in 0..k {
        // multiply by (s - shift - j) / (j + 1)
        let c = -(shift + j as f64);
        let mut next = vec![0.0; poly.len() + 1];
        for (deg, a) in poly.iter().enumerate() {
            next[deg + 1] += a / (j + 1) as f64;
            next[deg] += a * c / (j + 1) as f64;
        }
        poly = next;
    }
    poly
}

impl DependentNorm {
    /// Builds the law and computes its normalizer to relative accuracy `tol`.
    pub fn new(betas: Vec<f64>, beta: f64, psi: SlowlyVarying, tol: f64) -> Result<Self> {
        if betas.is_empty() || betas.len() > 3 {
            return Err(invalid(format!(
                "dependent-norm laws support 1 to 3 coordinates, got {}",
                betas.len()
            )));
        }
        if betas.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            return Err(invalid("coordinate exponents must be positive"));
        }
        psi.validate()?;
        let inv_sum: f64 = betas.iter().map(|b| 1.0 / b).sum();
        if !(beta > inv_sum) {
            return Err(Error::DivergentMass(format!(
                "beta = {beta} must exceed sum of 1/beta_i = {inv_sum}"
            )));
        }
        let unit = betas.iter().all(|&b| b == 1.0);
        if !unit && betas.len() > 2 {
            return Err(Error::UnsupportedFamily(
                "non-unit coordinate exponents are supported for d <= 2 only".into(),
            ));
        }
        let d = betas.len();
        let mut law = DependentNorm {
            beta,
            betas,
            psi,
            c0: 1.0,
            c0_rel_error: 0.0,
            moments: Arc::new((0..d).map(|_| Mutex::new(vec![(0.0, 0.0)])).collect()),
        };
        let (z, err) = law.kernel_total()?;
        let rel = err / z;
        if rel > tol {
            return Err(Error::Accuracy {
                requested: tol,
                achieved: rel,
            });
        }
        law.c0 = 1.0 / z;
        law.c0_rel_error = rel;
        Ok(law)
    }

    pub fn dim(&self) -> usize {
        self.betas.len()
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn betas(&self) -> &[f64] {
        &self.betas
    }
    pub fn psi(&self) -> &SlowlyVarying {
        &self.psi
    }
    pub fn c0(&self) -> f64 {
        self.c0
    }
    /// Relative error bound on the normalizer.
    pub fn c0_rel_error(&self) -> f64 {
        self.c0_rel_error
    }
    pub fn unit_exponents(&self) -> bool {
        self.betas.iter().all(|&b| b == 1.0)
    }

    /// `P(X_1 + ... + X_d >= s0)` for unit exponents.
    pub(crate) fn radius_tail(&self, s0: f64) -> f64 {
        let d = self.dim();
        let s0 = s0.ceil().max(d as f64);
        (self.c0 * self.shell_sum(&binomial_poly(1.0, d - 1), s0).0).clamp(0.0, 1.0)
    }

    /// `P(X_1 + ... + X_d = s)` for unit exponents.
    pub(crate) fn radius_pmf(&self, s: i64) -> f64 {
        let d = self.dim() as i64;
        if s < d {
            return 0.0;
        }
        let count: f64 = binomial_poly(1.0, (d - 1) as usize)
            .iter()
            .rev()
            .fold(0.0, |acc, a| acc * s as f64 + a);
        self.c0 * count.round() * self.radial(s as f64)
    }

    /// Unnormalized kernel as a function of `s = sum x_i^{beta_i}`.
    pub fn radial(&self, s: f64) -> f64 {
        self.psi.eval(s) * s.powf(-self.beta)
    }

    pub fn pmf(&self, x: &[i64]) -> f64 {
        if x.iter().any(|&v| v < 1) {
            return 0.0;
        }
        let s: f64 = x
            .iter()
            .zip(&self.betas)
            .map(|(&v, &b)| (v as f64).powf(b))
            .sum();
        self.c0 * self.radial(s)
    }

    /// `sum_{s >= s0} P(s) psi(s) s^{-beta}` over `s = s0, s0+1, ...` for a
    /// polynomial `P` given by ascending coefficients.
    fn shell_sum(&self, poly: &[f64], s0: f64) -> (f64, f64) {
        let deg = poly.len() - 1;
        if let SlowlyVarying::Constant { c } = self.psi {
            let (mut v, mut e) = (0.0, 0.0);
            for (j, a) in poly.iter().enumerate() {
                if *a == 0.0 {
                    continue;
                }
                let (h, he) = hurwitz_with_error(self.beta - j as f64, s0);
                v += a * h;
                e += (a * he).abs() + (a * h).abs() * 1e-15;
            }
            return (c * v, c * e);
        }
        let f = |s: f64| {
            let p: f64 = poly.iter().rev().fold(0.0, |acc, a| acc * s + a);
            p * self.radial(s)
        };
        smooth_series(&f, s0, self.beta - deg as f64)
    }

    /// Total unnormalized mass with an error estimate.
    fn kernel_total(&self) -> Result<(f64, f64)> {
        let d = self.dim();
        if self.unit_exponents() {
            return Ok(self.shell_sum(&binomial_poly(1.0, d - 1), d as f64));
        }
        if d == 1 {
            let b = self.betas[0];
            let f = |t: f64| self.radial(t.powf(b));
            return Ok(smooth_series(&f, 1.0, self.beta * b));
        }
        let (b0, b1) = (self.betas[0], self.betas[1]);
        let outer = |t: f64| self.inner_sum(t.powf(b0), b1).0;
        let decay = b0 * (self.beta - 1.0 / b1);
        let (v, e) = smooth_series(&outer, 1.0, decay);
        Ok((v, e + v * 1e-11))
    }

    /// `sum_{y >= 1} radial(a + y^{b})`.
    fn inner_sum(&self, a: f64, b: f64) -> (f64, f64) {
        let f = |y: f64| self.radial(a + y.powf(b));
        smooth_series(&f, 1.0, self.beta * b)
    }

    fn other(&self, i: usize) -> usize {
        1 - i
    }

    /// `P(X^(i) = t)` evaluated at real `t >= 1` (exact at integers).
    pub fn marginal_pmf_real(&self, i: usize, t: f64) -> f64 {
        if t < 1.0 {
            return 0.0;
        }
        let d = self.dim();
        if d == 1 {
            return self.c0 * self.radial(t.powf(self.betas[0]));
        }
        if self.unit_exponents() {
            // compositions of s - t into d - 1 positive parts
            let poly = binomial_poly(t + 1.0, d - 2);
            return self.c0 * self.shell_sum(&poly, t + (d - 1) as f64).0;
        }
        let j = self.other(i);
        self.c0 * self.inner_sum(t.powf(self.betas[i]), self.betas[j]).0
    }

    pub fn marginal_pmf(&self, i: usize, k: i64) -> f64 {
        if k < 1 {
            0.0
        } else {
            self.marginal_pmf_real(i, k as f64)
        }
    }

    /// `P(X^(i) > a)` for `a >= 0`, with an error estimate.
    pub fn marginal_upper_tail(&self, i: usize, a: f64) -> (f64, f64) {
        let m = a.max(0.0).floor();
        let d = self.dim();
        if self.unit_exponents() {
            let poly = binomial_poly(m + 1.0, d - 1);
            let (v, e) = self.shell_sum(&poly, m + d as f64);
            return (self.c0 * v, self.c0 * e + self.c0 * v * self.c0_rel_error);
        }
        let f = |t: f64| self.marginal_pmf_real(i, t);
        let (v, e) = smooth_series(&f, m + 1.0, 1.0 + self.marginal_gamma(i));
        (v, e + v * self.c0_rel_error)
    }

    /// `gamma_i = beta_i (beta - sum_j 1/beta_j)`.
    pub fn marginal_gamma(&self, i: usize) -> f64 {
        let inv_sum: f64 = self.betas.iter().map(|b| 1.0 / b).sum();
        self.betas[i] * (self.beta - inv_sum)
    }

    /// Constant `c` in `P(X^(i) = x) ~ c psi(x^{beta_i}) x^{-(1+gamma_i)}`:
    /// `c0 * prod_{j != i} Gamma(1/beta_j)/beta_j * Gamma(beta - B')/Gamma(beta)`
    /// where `B' = sum_{j != i} 1/beta_j`.
    pub fn marginal_constant(&self, i: usize) -> f64 {
        let mut prod = 1.0;
        let mut b_rest = 0.0;
        for (j, &b) in self.betas.iter().enumerate() {
            if j != i {
                prod *= gamma(1.0 / b) / b;
                b_rest += 1.0 / b;
            }
        }
        self.c0 * prod * (ln_gamma(self.beta - b_rest) - ln_gamma(self.beta)).exp()
    }

    /// Mean of coordinate `i` when finite.
    pub fn marginal_mean(&self, i: usize) -> Option<f64> {
        if self.marginal_gamma(i) <= 1.0 {
            return None;
        }
        let d = self.dim();
        if self.unit_exponents() {
            // E[X_i | sum = s] = s / d by exchangeability
            let mut poly = vec![0.0];
            poly.extend(binomial_poly(1.0, d - 1).iter().map(|a| a / d as f64));
            return Some(self.c0 * self.shell_sum(&poly, d as f64).0);
        }
        let f = |t: f64| t * self.marginal_pmf_real(i, t);
        Some(smooth_series(&f, 1.0, self.marginal_gamma(i)).0)
    }

    /// `(E[X_i 1{X_i <= x}], E[X_i^2 1{X_i <= x}])`.
    pub fn truncated_moments(&self, i: usize, x: f64) -> (f64, f64) {
        if x < 1.0 {
            return (0.0, 0.0);
        }
        let m = x.floor().min(1e18) as usize;
        let mut table = self.moments[i].lock().expect("moment table poisoned");
        let want = m.min(MOMENT_TABLE_CAP);
        while table.len() <= want {
            let k = table.len();
            let p = self.marginal_pmf(i, k as i64);
            let (mu, sigma) = table[k - 1];
            let kf = k as f64;
            table.push((mu + kf * p, sigma + kf * kf * p));
        }
        let (mut mu, mut sigma) = table[want];
        drop(table);
        if m > want {
            // Smooth remainder over (want, m] by Euler-Maclaurin.
            let (a, b) = ((want + 1) as f64, m as f64);
            for (power, acc) in [(1, &mut mu), (2, &mut sigma)] {
                let h = |t: f64| t.powi(power) * self.marginal_pmf_real(i, t);
                let q = integrate(
                    |u: f64| {
                        let t = u.exp();
                        h(t) * t
                    },
                    a.ln(),
                    b.ln(),
                    0.0,
                    1e-13,
                );
                let dh = |t: f64| (h(t * (1.0 + 1e-4)) - h(t * (1.0 - 1e-4))) / (2e-4 * t);
                *acc += q.value + 0.5 * (h(a) + h(b)) + (dh(b) - dh(a)) / 12.0;
            }
        }
        (mu, sigma)
    }

    /// Tail spec of coordinate `i` implied by the marginal asymptotics.
    pub fn tail_spec(&self, i: usize) -> MarginalTailSpec {
        let gamma_i = self.marginal_gamma(i);
        let c = self.marginal_constant(i) / gamma_i;
        let scaled_psi = match &self.psi {
            SlowlyVarying::Constant { c: k } => SlowlyVarying::constant(c * k),
            SlowlyVarying::LogPower { c: k, rho } => SlowlyVarying::LogPower {
                c: c * k * self.betas[i].powf(*rho),
                rho: *rho,
            },
            SlowlyVarying::Tabulated { points } => SlowlyVarying::Tabulated {
                points: points
                    .iter()
                    .map(|&(x, y)| (x.powf(1.0 / self.betas[i]).max(1.0), c * y))
                    .collect(),
            },
        };
        if gamma_i < 2.0 {
            MarginalTailSpec {
                alpha: gamma_i,
                gamma: gamma_i,
                p: 1.0,
                q: 0.0,
                l: scaled_psi.clone(),
                phi: scaled_psi,
            }
        } else {
            let sigma = if gamma_i == 2.0 {
                SlowlyVarying::LogPower {
                    c: 2.0 * c,
                    rho: 1.0,
                }
            } else {
                let m2 = self.truncated_moments(i, 1e12).1;
                SlowlyVarying::constant(m2)
            };
            MarginalTailSpec {
                alpha: 2.0,
                gamma: gamma_i,
                p: 1.0,
                q: 0.0,
                l: sigma,
                phi: scaled_psi,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::zeta::zeta;

    fn example() -> DependentNorm {
        DependentNorm::new(vec![1.0, 1.0], 3.0, SlowlyVarying::constant(1.0), 1e-10).unwrap()
    }

    #[test]
    fn binomial_polynomials() {
        // binom(s-1, 2) at s = 5 is 6
        let p = binomial_poly(1.0, 2);
        let v: f64 = p.iter().rev().fold(0.0, |acc, a| acc * 5.0 + a);
        assert!((v - 6.0).abs() < 1e-12);
    }

    #[test]
    fn normalizer_by_shells() {
        let law = example();
        let expected = 1.0 / (zeta(2.0) - zeta(3.0));
        assert!((law.c0() - expected).abs() < 1e-12 * expected);
        let one_d =
            DependentNorm::new(vec![1.0], 2.0, SlowlyVarying::constant(1.0), 1e-10).unwrap();
        assert!((one_d.c0() - 6.0 / std::f64::consts::PI.powi(2)).abs() < 1e-13);
    }

    #[test]
    fn divergent_mass_rejected() {
        let r = DependentNorm::new(vec![1.0, 1.0], 2.0, SlowlyVarying::constant(1.0), 1e-8);
        assert!(matches!(r, Err(Error::DivergentMass(_))));
    }

    #[test]
    fn marginal_tail_matches_direct_sum() {
        let law = example();
        let mut tail = 1.0;
        for k in 1..=300i64 {
            tail -= law.marginal_pmf(0, k);
            let (t, _) = law.marginal_upper_tail(0, k as f64);
            assert!((t - tail).abs() < 1e-12, "k={k}: {t} vs {tail}");
        }
    }

    #[test]
    fn general_exponents_match_unit_path() {
        // beta_i = 1 routed through the generic nested sums must agree with shells
        let unit = example();
        let mut generic = unit.clone();
        let (z, _) = {
            let (b0, b1) = (1.0, 1.0);
            let outer = |t: f64| generic.inner_sum(t.powf(b0), b1).0;
            smooth_series(&outer, 1.0, 2.0)
        };
        generic.c0 = 1.0 / z;
        assert!((generic.c0 / unit.c0() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn non_unit_exponents_normalize() {
        let law =
            DependentNorm::new(vec![1.0, 2.0], 3.0, SlowlyVarying::constant(1.0), 1e-8).unwrap();
        let mut direct = 0.0;
        for x1 in 1..=3000i64 {
            for x2 in 1..=60i64 {
                direct += law.pmf(&[x1, x2]);
            }
        }
        // the box misses only a small tail
        assert!(direct < 1.0 && direct > 0.999, "{direct}");
        let m0: f64 = (1..=20000).map(|k| law.marginal_pmf(1, k)).sum();
        assert!((m0 - 1.0).abs() < 1e-6, "{m0}");
    }

    #[test]
    fn log_power_psi_normalizes() {
        let psi = SlowlyVarying::LogPower { c: 1.0, rho: 0.5 };
        let law = DependentNorm::new(vec![1.0, 1.0], 3.0, psi, 1e-8).unwrap();
        let mut direct = 0.0;
        for s in 2..=200_000i64 {
            direct += (s - 1) as f64 * law.pmf(&[1, s - 1]);
        }
        assert!(direct < 1.0 && 1.0 - direct < 1e-4, "{direct}");
    }

    #[test]
    fn truncated_moments_past_table() {
        let law = example();
        let (mu_small, _) = law.truncated_moments(0, 1000.0);
        let direct: f64 = (1..=1000).map(|k| k as f64 * law.marginal_pmf(0, k)).sum();
        assert!((mu_small - direct).abs() < 1e-12);
    }
}
