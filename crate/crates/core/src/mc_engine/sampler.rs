use std::sync::Arc;

use super::philox::PhiloxRng;
use crate::error::{invalid, Error, Result};
use crate::numerics::zeta::zeta;
use crate::tail_models::{DependentNorm, Family, LatticeLaw, Marginal1d, SlowlyVarying};

/// Head of every hybrid sampler: values within this distance of zero are
/// drawn from an alias table.
pub const ALIAS_HEAD: i64 = 1 << 12;
/// Tail draws beyond this value saturate.
pub const SATURATION: i64 = 1 << 62;
/// Alias head of the radius sampler of unit-exponent dependent laws. Radius
/// draws are rare, so a wide head costs little and keeps inversion rarer.
const RADIUS_HEAD: i64 = 1 << 15;

/// Walker/Vose alias table, padded to a power of two. Thresholds are kept
/// as 64-bit fractions. Tables with at most 2^16 buckets take the index and
/// the leading coin bits from one 32-bit draw and fetch more coin bits only
/// on a tie, so the comparison is exact to 2^-64 at the cost of one word.
#[derive(Debug, Clone)]
pub struct AliasTable {
    threshold: Vec<u64>,
    alias: Vec<u32>,
    bits: u32,
}

const PACKED_BITS: u32 = 16;

impl AliasTable {
    pub fn new(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() || weights.len() > 1 << 31 {
            return Err(invalid("alias table needs between 1 and 2^31 weights"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(invalid(
                "alias weights must be nonnegative with positive sum",
            ));
        }
        let n = weights.len().next_power_of_two();
        let bits = n.trailing_zeros();
        let mut scaled: Vec<f64> = (0..n)
            .map(|i| weights.get(i).map_or(0.0, |w| w * n as f64 / total))
            .collect();
        let mut prob = vec![1.0; n];
        let mut alias: Vec<u32> = (0..n as u32).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) =
            (0..n).partition(|&i| scaled[i] < 1.0);
        while let (Some(s), Some(&l)) = (small.pop(), large.last()) {
            prob[s] = scaled[s];
            alias[s] = l as u32;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // a full bucket keeps itself as alias, so the threshold is moot
        let threshold = prob
            .iter()
            .map(|&p| {
                if p >= 1.0 {
                    u64::MAX
                } else {
                    (p * 2f64.powi(64)) as u64
                }
            })
            .collect();
        Ok(AliasTable {
            threshold,
            alias,
            bits,
        })
    }

    /// Number of buckets (a power of two).
    pub fn len(&self) -> usize {
        self.threshold.len()
    }

    pub fn is_empty(&self) -> bool {
        self.threshold.is_empty()
    }

    #[inline]
    pub fn sample(&self, rng: &mut PhiloxRng) -> usize {
        if self.bits == 0 {
            return 0;
        }
        let (i, accept) = if self.bits <= PACKED_BITS {
            let u = rng.next_u32();
            let i = (u >> (32 - self.bits)) as usize;
            let lead = 32 - self.bits;
            let coin = u & ((1u32 << lead) - 1);
            let thr = self.threshold[i];
            let top = (thr >> (64 - lead)) as u32;
            let accept = match coin.cmp(&top) {
                std::cmp::Ordering::Less => true,
                std::cmp::Ordering::Greater => false,
                std::cmp::Ordering::Equal => {
                    let rest = 64 - lead;
                    (rng.next_u64() >> lead) < (thr & ((1u64 << rest) - 1))
                }
            };
            (i, accept)
        } else {
            let i = (rng.next_u32() >> (32 - self.bits)) as usize;
            (i, rng.next_u64() < self.threshold[i])
        };
        if accept {
            i
        } else {
            self.alias[i] as usize
        }
    }
}

type TailFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Integer law: alias table on a head window plus exact inversion of the
/// closed-form tails outside it.
#[derive(Clone)]
pub struct HybridSampler {
    head_lo: i64,
    head_hi: i64,
    /// Buckets: head values, then the upper tail, then the lower tail.
    table: AliasTable,
    upper_mass: f64,
    lower_mass: f64,
    /// `P(X > x)`.
    upper: TailFn,
    /// `P(X <= -x)`.
    lower: TailFn,
}

impl std::fmt::Debug for HybridSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HybridSampler")
            .field("head", &(self.head_lo, self.head_hi))
            .field("upper_mass", &self.upper_mass)
            .field("lower_mass", &self.lower_mass)
            .finish()
    }
}

impl HybridSampler {
    pub fn new(
        support: (i64, i64),
        pmf: &dyn Fn(i64) -> f64,
        upper: TailFn,
        lower: TailFn,
    ) -> Result<Self> {
        Self::with_head(ALIAS_HEAD, support, pmf, upper, lower)
    }

    /// As [`new`](Self::new), with values in `[-head, head]` in the alias table.
    pub fn with_head(
        head: i64,
        support: (i64, i64),
        pmf: &dyn Fn(i64) -> f64,
        upper: TailFn,
        lower: TailFn,
    ) -> Result<Self> {
        let head_lo = support.0.max(-head);
        let head_hi = support.1.min(head).max(head_lo);
        let mut weights: Vec<f64> = (head_lo..=head_hi).map(pmf).collect();
        let upper_mass = if support.1 > head_hi {
            upper(head_hi as f64)
        } else {
            0.0
        };
        let lower_mass = if support.0 < head_lo {
            lower((1 - head_lo) as f64)
        } else {
            0.0
        };
        weights.push(upper_mass);
        weights.push(lower_mass);
        let table = AliasTable::new(&weights)?;
        Ok(HybridSampler {
            head_lo,
            head_hi,
            table,
            upper_mass,
            lower_mass,
            upper,
            lower,
        })
    }

    /// Sampler for coordinate `i` of a law.
    pub fn for_coordinate(law: &LatticeLaw, i: usize) -> Result<Self> {
        let l1 = Arc::new(law.clone());
        let l2 = Arc::clone(&l1);
        Self::new(
            law.marginal_support(i),
            &|k| law.marginal_pmf(i, k),
            Arc::new(move |x| l1.marginal_tail(i, x).0),
            Arc::new(move |x| l2.marginal_tail(i, x).1),
        )
    }

    pub fn for_marginal(m: &Marginal1d) -> Result<Self> {
        let (m1, m2) = (m.clone(), m.clone());
        Self::new(
            m.support(),
            &|k| m.pmf(k),
            Arc::new(move |x| m1.upper_tail(x)),
            Arc::new(move |x| m2.lower_tail(x)),
        )
    }

    /// Smallest `k >= start` with `tail(k) <= t` (saturating).
    fn invert(tail: &TailFn, start: i64, t: f64, strict: bool) -> i64 {
        let hit = |k: i64| {
            let v = tail(k as f64);
            if strict {
                v < t
            } else {
                v <= t
            }
        };
        if !hit(SATURATION) {
            return SATURATION;
        }
        let (mut lo, mut hi) = (start, SATURATION);
        // exponential search keeps typical draws cheap
        let mut probe = start;
        let mut width = 1i64;
        while probe < SATURATION {
            if hit(probe) {
                hi = probe;
                break;
            }
            lo = probe + 1;
            probe = probe.saturating_add(width).min(SATURATION);
            width = width.saturating_mul(2);
        }
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if hit(mid) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo
    }

    #[inline]
    pub fn sample(&self, rng: &mut PhiloxRng) -> i64 {
        let width = (self.head_hi - self.head_lo + 1) as usize;
        let bucket = self.table.sample(rng);
        if bucket < width {
            return self.head_lo + bucket as i64;
        }
        let v = rng.next_f64();
        if bucket == width {
            Self::invert(&self.upper, self.head_hi + 1, v * self.upper_mass, false)
        } else {
            // X = -m with P(X <= -m) >= t > P(X <= -m-1)
            let shifted: TailFn = {
                let lower = Arc::clone(&self.lower);
                Arc::new(move |m| lower(m + 1.0))
            };
            -Self::invert(&shifted, -self.head_lo + 1, v * self.lower_mass, true)
        }
    }

    /// Mass outside the alias head.
    pub fn tail_mass(&self) -> f64 {
        self.upper_mass + self.lower_mass
    }
}

/// Rejection sampler for dependent-norm laws with general exponents.
#[derive(Debug, Clone)]
struct EnvelopeSampler {
    law: DependentNorm,
    coords: Vec<HybridSampler>,
    exponents: Vec<f64>,
    weights: Vec<f64>,
    reduced_beta: f64,
    bound: f64,
    acceptance: f64,
}

impl EnvelopeSampler {
    fn new(law: &DependentNorm) -> Result<Self> {
        let inv_sum: f64 = law.betas().iter().map(|b| 1.0 / b).sum();
        let slack = if law.psi().is_constant() {
            0.0
        } else {
            0.5 * (law.beta() - inv_sum)
        };
        let reduced_beta = law.beta() - slack;
        let weights: Vec<f64> = law.betas().iter().map(|b| (1.0 / b) / inv_sum).collect();
        let exponents: Vec<f64> = law
            .betas()
            .iter()
            .zip(&weights)
            .map(|(b, w)| reduced_beta * b * w)
            .collect();
        // bound on psi(s) s^{-slack} over s >= d
        let bound = match law.psi() {
            SlowlyVarying::Constant { c } => *c,
            SlowlyVarying::LogPower { c, rho } => {
                let peak = if *rho > 0.0 {
                    (rho / slack - 1.0).exp()
                } else {
                    1.0
                };
                let at = |s: f64| c * (1.0 + s.max(1.0).ln()).powf(*rho) * s.max(1.0).powf(-slack);
                at(peak).max(at(1.0))
            }
            other => {
                let mut m: f64 = 0.0;
                let mut s = 1.0;
                while s < 1e300 {
                    m = m.max(other.eval(s) * s.powf(-slack));
                    s *= 1.1;
                }
                m * 1.01
            }
        };
        let coords = exponents
            .iter()
            .map(|&s| HybridSampler::for_marginal(&Marginal1d::Zeta { s }))
            .collect::<Result<Vec<_>>>()?;
        let env_total: f64 = weights
            .iter()
            .map(|w| w.powf(reduced_beta * w))
            .product::<f64>()
            * exponents.iter().map(|&s| zeta(s)).product::<f64>();
        let acceptance = 1.0 / (law.c0() * bound * env_total);
        Ok(EnvelopeSampler {
            law: law.clone(),
            coords,
            exponents,
            weights,
            reduced_beta,
            bound,
            acceptance,
        })
    }

    fn sample(&self, rng: &mut PhiloxRng, out: &mut [i64]) {
        loop {
            for (o, c) in out.iter_mut().zip(&self.coords) {
                *o = c.sample(rng);
            }
            let s: f64 = out
                .iter()
                .zip(self.law.betas())
                .map(|(&x, &b)| (x as f64).powf(b))
                .sum();
            let target = self.law.radial(s);
            let env: f64 = self
                .weights
                .iter()
                .zip(&self.exponents)
                .zip(out.iter())
                .map(|((w, e), &x)| w.powf(self.reduced_beta * w) * (x as f64).powf(-e))
                .product::<f64>()
                * self.bound;
            if rng.next_f64() * env <= target {
                return;
            }
        }
    }
}

/// Largest finite product support turned into one joint alias table.
const SMALL_JOINT: i64 = 4096;

fn product_cells(ms: &[Marginal1d]) -> Vec<(Vec<i64>, f64)> {
    let mut cells = vec![(Vec::new(), 1.0)];
    for m in ms {
        let (lo, hi) = m.support();
        cells = cells
            .into_iter()
            .flat_map(|(c, w)| {
                (lo..=hi).map(move |k| {
                    let mut c = c.clone();
                    c.push(k);
                    (c, w * m.pmf(k))
                })
            })
            .collect();
    }
    cells
}

/// Number of positive compositions of `s` into `dim` parts (`dim` is 2 or 3).
fn compositions(s: i64, dim: usize) -> f64 {
    let m = (s - 1) as f64;
    if dim == 2 {
        m
    } else {
        m * (m - 1.0) / 2.0
    }
}

#[derive(Debug, Clone)]
enum Kind {
    Deterministic(Vec<i64>),
    Product(Vec<HybridSampler>),
    /// Joint alias table over small-radius points, then radius and a
    /// uniform composition for the rest.
    Radius {
        head: AliasTable,
        points: Vec<[i64; 3]>,
        radius: HybridSampler,
        dim: usize,
    },
    Envelope(Box<EnvelopeSampler>),
    Table {
        table: AliasTable,
        cells: Vec<Vec<i64>>,
    },
}

/// Exact sampler for one step of a lattice law.
#[derive(Debug, Clone)]
pub struct StepSampler {
    kind: Kind,
    dim: usize,
}

impl StepSampler {
    pub fn new(law: &LatticeLaw) -> Result<Self> {
        let dim = law.dim();
        let kind = match law.family() {
            Family::DeterministicStep(v) => Kind::Deterministic(v.clone()),
            Family::IndependentProduct(ms) => {
                let sizes: Vec<i64> = ms
                    .iter()
                    .map(|m| m.support())
                    .map(|(lo, hi)| hi.saturating_sub(lo) + 1)
                    .collect();
                if sizes
                    .iter()
                    .try_fold(1i64, |acc, &n| {
                        acc.checked_mul(n).filter(|&v| v <= SMALL_JOINT)
                    })
                    .is_some()
                {
                    let (cells, weights): (Vec<Vec<i64>>, Vec<f64>) =
                        product_cells(ms).into_iter().unzip();
                    Kind::Table {
                        table: AliasTable::new(&weights)?,
                        cells,
                    }
                } else {
                    Kind::Product(
                        ms.iter()
                            .map(HybridSampler::for_marginal)
                            .collect::<Result<_>>()?,
                    )
                }
            }
            Family::DependentNorm(d) if d.dim() == 1 => {
                Kind::Product(vec![HybridSampler::for_coordinate(law, 0)?])
            }
            Family::DependentNorm(d) if d.unit_exponents() && d.dim() <= 3 => {
                let (d1, d2) = (d.clone(), d.clone());
                let cut = if dim == 2 { 128 } else { 37 };
                let mut points = Vec::new();
                let mut weights = Vec::new();
                for s in dim as i64..=cut {
                    let w = d.radius_pmf(s) / compositions(s, dim);
                    for x in 1..s {
                        if dim == 2 {
                            points.push([x, s - x, 0]);
                            weights.push(w);
                        } else {
                            for y in 1..s - x {
                                points.push([x, y, s - x - y]);
                                weights.push(w);
                            }
                        }
                    }
                }
                weights.push(d.radius_tail((cut + 1) as f64));
                let head = AliasTable::new(&weights)?;
                let radius = HybridSampler::with_head(
                    RADIUS_HEAD,
                    (cut + 1, i64::MAX),
                    &|s| d.radius_pmf(s),
                    Arc::new(move |x| d1.radius_tail(x.floor() + 1.0)),
                    Arc::new(move |_| {
                        let _ = &d2;
                        0.0
                    }),
                )?;
                Kind::Radius {
                    head,
                    points,
                    radius,
                    dim,
                }
            }
            Family::DependentNorm(d) => Kind::Envelope(Box::new(EnvelopeSampler::new(d)?)),
            Family::Tabulated { table, .. } => {
                if table.residual > 0.0 {
                    return Err(Error::UnsupportedFamily(
                        "tabulated law leaves mass unplaced; it cannot be sampled exactly".into(),
                    ));
                }
                let (cells, weights): (Vec<Vec<i64>>, Vec<f64>) = table.cells().unzip();
                Kind::Table {
                    table: AliasTable::new(&weights)?,
                    cells,
                }
            }
        };
        Ok(StepSampler { kind, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Expected acceptance rate of the rejection envelope, when one is used.
    pub fn acceptance_rate(&self) -> Option<f64> {
        match &self.kind {
            Kind::Envelope(e) => Some(e.acceptance),
            _ => None,
        }
    }

    #[inline]
    pub fn sample(&self, rng: &mut PhiloxRng, out: &mut [i64]) {
        match &self.kind {
            Kind::Deterministic(v) => out.copy_from_slice(v),
            Kind::Product(ms) => {
                for (o, m) in out.iter_mut().zip(ms) {
                    *o = m.sample(rng);
                }
            }
            Kind::Radius {
                head,
                points,
                radius,
                dim,
            } => {
                let k = head.sample(rng);
                if let Some(p) = points.get(k) {
                    // element-wise: a slice copy of two or three words is a libc call
                    for (o, v) in out.iter_mut().zip(p) {
                        *o = *v;
                    }
                    return;
                }
                let s = radius.sample(rng);
                match dim {
                    2 => {
                        let x = 1 + rng.below((s - 1) as u64) as i64;
                        out[0] = x;
                        out[1] = s - x;
                    }
                    _ => {
                        // two distinct cut points in 1..s-1
                        let (a, b) = loop {
                            let a = 1 + rng.below((s - 1) as u64) as i64;
                            let b = 1 + rng.below((s - 1) as u64) as i64;
                            if a != b {
                                break (a.min(b), a.max(b));
                            }
                        };
                        out[0] = a;
                        out[1] = b - a;
                        out[2] = s - b;
                    }
                }
            }
            Kind::Envelope(e) => e.sample(rng, out),
            Kind::Table { table, cells } => out.copy_from_slice(&cells[table.sample(rng)]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc_engine::StreamSpec;

    #[test]
    fn alias_matches_weights() {
        let t = AliasTable::new(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        let mut rng = StreamSpec::new(3, 0).rng();
        let mut counts = [0u32; 4];
        for _ in 0..200_000 {
            counts[t.sample(&mut rng)] += 1;
        }
        for (k, c) in counts.iter().enumerate() {
            let p = 0.1 * (k + 1) as f64;
            let sd = (p * (1.0 - p) / 200_000.0).sqrt();
            assert!((*c as f64 / 200_000.0 - p).abs() < 4.0 * sd);
        }
    }

    #[test]
    fn inversion_is_exact_on_pareto() {
        let m = Marginal1d::Pareto { gamma: 0.5 };
        let s = HybridSampler::for_marginal(&m).unwrap();
        // smallest k with (k+1)^{-1/2} <= t
        for t in [1e-3, 5e-5, 1e-9] {
            let k = HybridSampler::invert(&s.upper, ALIAS_HEAD + 1, t, false);
            assert!(m.upper_tail(k as f64) <= t && m.upper_tail((k - 1) as f64) > t);
        }
    }

    #[test]
    fn two_sided_lower_tail_draws() {
        let m = Marginal1d::TwoSided {
            gamma: 0.7,
            p: 0.3,
            rho: 0.0,
        };
        let s = HybridSampler::for_marginal(&m).unwrap();
        let mut rng = StreamSpec::new(11, 0).rng();
        let n = 400_000;
        let mut below = 0;
        for _ in 0..n {
            if s.sample(&mut rng) <= -5000 {
                below += 1;
            }
        }
        let p = m.lower_tail(5000.0);
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        assert!(
            (below as f64 / n as f64 - p).abs() < 4.0 * sd,
            "{} vs {p}",
            below as f64 / n as f64
        );
    }

    #[test]
    fn envelope_sampler_matches_pmf() {
        let law = LatticeLaw::dependent(vec![1.0, 2.0], 2.5, SlowlyVarying::constant(1.0)).unwrap();
        let s = StepSampler::new(&law).unwrap();
        let rate = s.acceptance_rate().unwrap();
        assert!(rate > 0.0 && rate <= 1.0);
        let mut rng = StreamSpec::new(5, 0).rng();
        let n = 200_000;
        let mut hits = 0;
        let mut x = [0i64; 2];
        for _ in 0..n {
            s.sample(&mut rng, &mut x);
            if x == [1, 1] {
                hits += 1;
            }
        }
        let p = law.pmf(&[1, 1]).unwrap();
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - p).abs() < 4.0 * sd);
    }
}
