//! Power sums and Hurwitz zeta values through Euler-Maclaurin summation.

/// `B_{2j} / (2j)!` for j = 1..=7.
const EM: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 720.0,
    1.0 / 30240.0,
    -1.0 / 1209600.0,
    1.0 / 47900160.0,
    -691.0 / 1307674368000.0,
    1.0 / 74724249600.0,
];
const EM_TERMS: usize = 6;
const DIRECT_LIMIT: f64 = 16.0;

/// m-th derivative of `t^{-s}`.
fn deriv(s: f64, m: i32, t: f64) -> f64 {
    let mut c = 1.0;
    for k in 0..m {
        c *= -(s + f64::from(k));
    }
    c * t.powf(-s - f64::from(m))
}

fn antideriv(s: f64, t: f64) -> f64 {
    if s == 1.0 {
        t.ln()
    } else {
        t.powf(1.0 - s) / (1.0 - s)
    }
}

/// Sum of `k^{-s}` for integer `k` in `[a, b]`, any real `s`, `a >= 1`.
pub fn power_sum_range(s: f64, a: u64, b: u64) -> f64 {
    if b < a {
        return 0.0;
    }
    let a0 = a.max(DIRECT_LIMIT as u64);
    let direct_end = if b - a < 64 { b } else { (a0 - 1).min(b) };
    let mut sum = 0.0;
    for k in a..=direct_end {
        sum += (k as f64).powf(-s);
    }
    if direct_end == b {
        return sum;
    }
    let (lo, hi) = (a0 as f64, b as f64);
    let f = |t: f64| t.powf(-s);
    sum += antideriv(s, hi) - antideriv(s, lo) + 0.5 * (f(lo) + f(hi));
    for (j, c) in EM.iter().take(EM_TERMS).enumerate() {
        let m = 2 * j as i32 + 1;
        sum += c * (deriv(s, m, hi) - deriv(s, m, lo));
    }
    sum
}

/// `sum_{k=1}^{n} k^{-s}`.
pub fn power_sum(s: f64, n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        power_sum_range(s, 1, n)
    }
}

/// Hurwitz zeta `sum_{k>=0} (k+a)^{-s}` for `s > 1`, `a > 0`, with a bound
/// on the truncation error of the asymptotic expansion.
pub fn hurwitz_with_error(s: f64, a: f64) -> (f64, f64) {
    assert!(s > 1.0 && a > 0.0, "hurwitz zeta needs s > 1 and a > 0");
    let mut sum = 0.0;
    let mut b = a;
    while b < DIRECT_LIMIT {
        sum += b.powf(-s);
        b += 1.0;
    }
    sum += b.powf(1.0 - s) / (s - 1.0) + 0.5 * b.powf(-s);
    for (j, c) in EM.iter().take(EM_TERMS).enumerate() {
        sum -= c * deriv(s, 2 * j as i32 + 1, b);
    }
    let err = (EM[EM_TERMS] * deriv(s, 2 * EM_TERMS as i32 + 1, b)).abs()
        + sum.abs() * 4.0 * f64::EPSILON;
    (sum, err)
}

pub fn hurwitz(s: f64, a: f64) -> f64 {
    hurwitz_with_error(s, a).0
}

/// Riemann zeta for `s > 1`.
pub fn zeta(s: f64) -> f64 {
    hurwitz(s, 1.0)
}

fn log_weight(t: f64, rho: f64) -> f64 {
    (1.0 + t.ln()).powf(rho)
}

/// Sum of `j^{-g} (1 + ln j)^rho` over integers `j` in `[a, b]`; `b = None`
/// means an infinite upper limit (requires `g > 1`).
pub fn power_log_sum(g: f64, rho: f64, a: u64, b: Option<u64>) -> f64 {
    let a = a.max(1);
    if rho == 0.0 {
        return match b {
            Some(b) => power_sum_range(g, a, b),
            None => hurwitz(g, a as f64),
        };
    }
    const DIRECT: u64 = 4096;
    let direct_end = match b {
        Some(b) if b - a.min(b) <= DIRECT => b,
        _ => a + DIRECT - 1,
    };
    let mut sum = 0.0;
    for j in a..=direct_end {
        let t = j as f64;
        sum += t.powf(-g) * log_weight(t, rho);
    }
    if b == Some(direct_end) {
        return sum;
    }
    let c = (direct_end + 1) as f64;
    let f = |t: f64| t.powf(-g) * log_weight(t, rho);
    let fp =
        |t: f64| t.powf(-g - 1.0) * (1.0 + t.ln()).powf(rho - 1.0) * (rho - g * (1.0 + t.ln()));
    let integrand = |u: f64| ((1.0 - g) * u).exp() * (1.0 + u).powf(rho);
    let lo = c.ln();
    let (hi, f_hi, fp_hi) = match b {
        Some(b) => {
            let t = b as f64;
            (t.ln(), f(t), fp(t))
        }
        None => {
            assert!(g > 1.0, "infinite power-log sum needs g > 1");
            (lo + 80.0 / (g - 1.0) + 2.0 * rho.abs(), 0.0, 0.0)
        }
    };
    let q = super::quad::integrate(integrand, lo, hi, 0.0, 1e-14);
    sum + q.value + 0.5 * (f(c) + f_hi) + (fp_hi - fp(c)) / 12.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_zeta_values() {
        let pi = std::f64::consts::PI;
        assert!((zeta(2.0) - pi * pi / 6.0).abs() < 1e-14);
        assert!((zeta(4.0) - pi.powi(4) / 90.0).abs() < 1e-14);
        assert!((zeta(3.0) - 1.202_056_903_159_594_2).abs() < 1e-14);
        assert!((zeta(1.5) - 2.612_375_348_685_488).abs() < 1e-13);
    }

    #[test]
    fn power_sums_match_direct() {
        for &s in &[-2.0, -1.0, 0.0, 0.5, 1.0, 2.0, 3.5] {
            let direct: f64 = (1..=5000u64).map(|k| (k as f64).powf(-s)).sum();
            let em = power_sum(s, 5000);
            assert!(
                (em - direct).abs() <= 1e-12 * direct.abs(),
                "s={s}: {em} vs {direct}"
            );
        }
    }

    #[test]
    fn hurwitz_shift_identity() {
        // zeta(s, a) = a^{-s} + zeta(s, a + 1)
        for &(s, a) in &[(2.0, 0.3), (3.0, 7.25), (1.2, 100.0)] {
            let lhs = hurwitz(s, a);
            let rhs = a.powf(-s) + hurwitz(s, a + 1.0);
            assert!((lhs - rhs).abs() < 1e-13 * lhs);
        }
    }

    #[test]
    fn power_log_sums_match_direct() {
        let direct: f64 = (3..=20000u64)
            .map(|j| (j as f64).powf(-1.5) * (1.0 + (j as f64).ln()).powf(1.3))
            .sum();
        let em = power_log_sum(1.5, 1.3, 3, Some(20000));
        assert!((em / direct - 1.0).abs() < 1e-12, "{em} vs {direct}");
        // infinite tail against a long direct sum plus integral tail
        let full = power_log_sum(3.0, 1.0, 1, None);
        let part: f64 = (1..=200000u64)
            .map(|j| (j as f64).powi(-3) * (1.0 + (j as f64).ln()))
            .sum();
        assert!((full - part) > 0.0 && (full - part) < 1e-9);
        assert_eq!(power_log_sum(2.0, 0.0, 1, None), zeta(2.0));
    }
}
