use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::philox::StreamSpec;
use super::sampler::{AliasTable, StepSampler};
use crate::error::{invalid, Error, Result};
use crate::exact_engine::{marginal_nstep, ConvMethod, StepSchedule};
use crate::numerics::stats::wilson_interval;
use crate::scaling::ScalingSchedule;
use crate::tail_models::{Family, LatticeLaw};

/// Walks per parallel work unit. Work units are merged with integer sums,
/// so results do not depend on how units are scheduled.
const BLOCK: u64 = 4096;

/// Point estimate with a normal-theory standard error and a 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub sigma: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Estimate {
    /// Binomial proportion `k / n` with a Wilson interval.
    pub fn proportion(k: u64, n: u64) -> Self {
        let p = if n == 0 { 0.0 } else { k as f64 / n as f64 };
        let sigma = if n == 0 {
            f64::INFINITY
        } else {
            (p * (1.0 - p) / n as f64).sqrt()
        };
        let (lo, hi) = wilson_interval(k, n, 1.96);
        Estimate {
            value: p,
            sigma,
            lo,
            hi,
        }
    }
}

/// Per-target visit counts accumulated over independent walks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkStats {
    pub seed: u64,
    pub targets: Vec<Vec<i64>>,
    /// Total visits per target.
    pub hits: Vec<u64>,
    /// Sum over walks of squared per-walk visit counts.
    pub hits_sq: Vec<u64>,
    pub walks: u64,
    pub steps: u64,
    /// Walks stopped by the step cap rather than by early exit.
    pub capped: u64,
    /// Set when the cap may cut off visits a renewal walk could still make.
    pub n_cap_warning: bool,
}

impl WalkStats {
    fn empty(seed: u64, targets: &[Vec<i64>]) -> Self {
        WalkStats {
            seed,
            targets: targets.to_vec(),
            hits: vec![0; targets.len()],
            hits_sq: vec![0; targets.len()],
            walks: 0,
            steps: 0,
            capped: 0,
            n_cap_warning: false,
        }
    }

    /// Adds another batch. Associative and commutative.
    pub fn merge(&mut self, other: &WalkStats) {
        for (a, b) in self.hits.iter_mut().zip(&other.hits) {
            *a += b;
        }
        for (a, b) in self.hits_sq.iter_mut().zip(&other.hits_sq) {
            *a += b;
        }
        self.walks += other.walks;
        self.steps += other.steps;
        self.capped += other.capped;
        self.n_cap_warning |= other.n_cap_warning;
    }

    /// Estimate of `G(x_t)`: mean visits per walk.
    pub fn estimate(&self, t: usize) -> Estimate {
        let (k, k2, n) = (self.hits[t], self.hits_sq[t], self.walks);
        if k == k2 {
            // at most one visit per walk: a proportion
            return Estimate::proportion(k, n);
        }
        let nf = n as f64;
        let mean = k as f64 / nf;
        let var = (k2 as f64 / nf - mean * mean).max(0.0) * nf / (nf - 1.0).max(1.0);
        let sigma = (var / nf).sqrt();
        Estimate {
            value: mean,
            sigma,
            lo: (mean - 1.96 * sigma).max(0.0),
            hi: mean + 1.96 * sigma,
        }
    }
}

fn check_targets(law: &LatticeLaw, targets: &[Vec<i64>]) -> Result<()> {
    if targets.is_empty() {
        return Err(invalid("no targets"));
    }
    if let Some(x) = targets.iter().find(|x| x.len() != law.dim()) {
        return Err(Error::DimensionMismatch {
            expected: law.dim(),
            got: x.len(),
        });
    }
    Ok(())
}

struct Walker<'a> {
    sampler: &'a StepSampler,
    targets: &'a [Vec<i64>],
    n_cap: u64,
    first_lo: i64,
    first_hi: i64,
    first_mask: &'a [bool],
    can_exit: bool,
    exit_at: &'a [i64],
}

impl Walker<'_> {
    fn run_block<P>(&self, walks: std::ops::Range<u64>, seed: u64, zero: P) -> WalkStats
    where
        P: AsRef<[i64]> + AsMut<[i64]> + Clone,
    {
        let mut stats = WalkStats::empty(seed, self.targets);
        let mut step = zero.clone();
        let mut local = vec![0u64; self.targets.len()];
        for j in walks {
            let mut rng = StreamSpec::new(seed, j).rng();
            let mut pos = zero.clone();
            local.iter_mut().for_each(|c| *c = 0);
            let mut exited = false;
            let mut n = 0;
            while n < self.n_cap {
                self.sampler.sample(&mut rng, step.as_mut());
                n += 1;
                for (p, s) in pos.as_mut().iter_mut().zip(step.as_ref()) {
                    *p = p.saturating_add(*s);
                }
                let pos = pos.as_ref();
                let p0 = pos[0];
                if p0 >= self.first_lo
                    && p0 <= self.first_hi
                    && self.first_mask[(p0 - self.first_lo) as usize]
                {
                    for (t, x) in self.targets.iter().enumerate() {
                        if x.as_slice() == pos {
                            local[t] += 1;
                        }
                    }
                }
                if self.can_exit && self.exit_at.iter().zip(pos).any(|(b, p)| p > b) {
                    exited = true;
                    break;
                }
            }
            stats.walks += 1;
            stats.steps += n;
            if !exited {
                stats.capped += 1;
            }
            for (t, &c) in local.iter().enumerate() {
                stats.hits[t] += c;
                stats.hits_sq[t] += c * c;
            }
        }
        stats
    }
}

/// Counts visits of `n_walks` independent walks to each target, running at
/// most `n_cap` steps per walk. Walk `j` uses stream `j` of `seed`. A walk
/// stops early once a coordinate with nonnegative steps has passed every
/// target.
pub fn green_mc(
    law: &LatticeLaw,
    targets: &[Vec<i64>],
    n_walks: u64,
    n_cap: u64,
    seed: u64,
) -> Result<WalkStats> {
    check_targets(law, targets)?;
    let d = law.dim();
    let sampler = StepSampler::new(law)?;
    let exit_bound: Vec<Option<i64>> = (0..d)
        .map(|i| {
            law.is_nonnegative(i)
                .then(|| targets.iter().map(|x| x[i]).max().expect("targets"))
        })
        .collect();
    let can_exit = exit_bound.iter().any(Option::is_some);
    // quick filter on the first coordinate
    let first_lo = targets.iter().map(|x| x[0]).min().expect("targets");
    let first_hi = targets.iter().map(|x| x[0]).max().expect("targets");
    let mut first_mask = vec![false; (first_hi - first_lo + 1) as usize];
    for x in targets {
        first_mask[(x[0] - first_lo) as usize] = true;
    }
    let renewal_need = targets
        .iter()
        .map(|x| *x.iter().min().expect("d >= 1"))
        .max()
        .unwrap_or(0);
    let warn = law.is_renewal() && (n_cap as i64) < renewal_need;

    let exit_at: Vec<i64> = exit_bound.iter().map(|b| b.unwrap_or(i64::MAX)).collect();
    let walker = Walker {
        sampler: &sampler,
        targets,
        n_cap,
        first_lo,
        first_hi,
        first_mask: &first_mask,
        can_exit,
        exit_at: &exit_at,
    };

    let blocks = n_walks.div_ceil(BLOCK);
    let partials: Vec<WalkStats> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let range = b * BLOCK..((b + 1) * BLOCK).min(n_walks);
            // fixed-size positions let the compiler unroll the common cases
            match d {
                1 => walker.run_block(range, seed, [0i64; 1]),
                2 => walker.run_block(range, seed, [0i64; 2]),
                3 => walker.run_block(range, seed, [0i64; 3]),
                _ => walker.run_block(range, seed, vec![0i64; d]),
            }
        })
        .collect();
    let mut total = WalkStats::empty(seed, targets);
    total.n_cap_warning = warn;
    for p in &partials {
        total.merge(p);
    }
    Ok(total)
}

/// Monte Carlo estimate of `P(S_n^(i) - b_n^(i) >= x, max_k X_k^(i) <= y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub x: f64,
    pub hits: u64,
    pub walks: u64,
    pub estimate: Estimate,
}

pub fn tail_prob_mc(
    law: &LatticeLaw,
    schedule: &ScalingSchedule,
    i: usize,
    n: u64,
    levels: &[f64],
    cap: Option<f64>,
    n_walks: u64,
    seed: u64,
) -> Result<Vec<TailEstimate>> {
    if i >= law.dim() {
        return Err(Error::DimensionMismatch {
            expected: law.dim(),
            got: i + 1,
        });
    }
    if n == 0 || levels.is_empty() {
        return Err(invalid("tail estimates need n >= 1 and at least one level"));
    }
    let b = schedule.b_n(i, n as f64)?;
    let sampler = StepSampler::new(law)?;
    let d = law.dim();
    let blocks = n_walks.div_ceil(BLOCK);
    let counts: Vec<Vec<u64>> = (0..blocks)
        .into_par_iter()
        .map(|blk| {
            let mut hits = vec![0u64; levels.len()];
            let mut step = vec![0i64; d];
            for j in blk * BLOCK..((blk + 1) * BLOCK).min(n_walks) {
                let mut rng = StreamSpec::new(seed, j).rng();
                let mut s = 0i64;
                let mut max = i64::MIN;
                for _ in 0..n {
                    sampler.sample(&mut rng, &mut step);
                    s = s.saturating_add(step[i]);
                    max = max.max(step[i]);
                }
                if cap.is_some_and(|y| max as f64 > y) {
                    continue;
                }
                for (h, &x) in hits.iter_mut().zip(levels) {
                    if s as f64 - b >= x {
                        *h += 1;
                    }
                }
            }
            hits
        })
        .collect();
    Ok(levels
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let hits: u64 = counts.iter().map(|c| c[k]).sum();
            TailEstimate {
                x,
                hits,
                walks: n_walks,
                estimate: Estimate::proportion(hits, n_walks),
            }
        })
        .collect())
}

/// How [`rescaled_samples`] draws `S_n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RescaleMethod {
    /// Sum `n` sampled steps.
    Walk,
    /// Draw each coordinate from its exact n-step law (independent
    /// coordinates only).
    ExactMarginal,
}

/// Largest truncated mass tolerated by the exact-marginal method.
const EXACT_MARGINAL_DROP: f64 = 1e-9;

/// `N` independent draws of `(S_n - b_n) / a_n`, coordinatewise.
pub fn rescaled_samples(
    law: &LatticeLaw,
    schedule: &ScalingSchedule,
    n: u64,
    count: usize,
    seed: u64,
    method: RescaleMethod,
) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(invalid("rescaled sums need n >= 1"));
    }
    let d = law.dim();
    let a: Vec<f64> = (0..d)
        .map(|i| schedule.a_n(i, n as f64))
        .collect::<Result<_>>()?;
    let b: Vec<f64> = (0..d)
        .map(|i| schedule.b_n(i, n as f64))
        .collect::<Result<_>>()?;
    match method {
        RescaleMethod::Walk => {
            let sampler = StepSampler::new(law)?;
            Ok((0..count as u64)
                .into_par_iter()
                .map(|j| {
                    let mut rng = StreamSpec::new(seed, j).rng();
                    let mut s = vec![0i64; d];
                    let mut step = vec![0i64; d];
                    for _ in 0..n {
                        sampler.sample(&mut rng, &mut step);
                        for (p, q) in s.iter_mut().zip(&step) {
                            *p = p.saturating_add(*q);
                        }
                    }
                    (0..d).map(|i| (s[i] as f64 - b[i]) / a[i]).collect()
                })
                .collect())
        }
        RescaleMethod::ExactMarginal => {
            match law.family() {
                Family::IndependentProduct(_) | Family::DeterministicStep(_) => {}
                _ => {
                    return Err(Error::UnsupportedFamily(
                        "exact-marginal sampling needs independent coordinates".into(),
                    ))
                }
            }
            let mut tables = Vec::with_capacity(d);
            for i in 0..d {
                let (smin, smax) = law.marginal_support(i);
                let w = (40.0 * a[i]).ceil() as i64;
                let lo = ((b[i].floor() as i64) - w).max(smin.saturating_mul(n as i64));
                let hi = ((b[i].ceil() as i64) + w).min(smax.saturating_mul(n as i64));
                let field = marginal_nstep(
                    law,
                    i,
                    n as usize,
                    lo,
                    hi,
                    None,
                    StepSchedule::Binary,
                    ConvMethod::Auto,
                )?;
                if field.dropped_mass() > EXACT_MARGINAL_DROP {
                    return Err(Error::Accuracy {
                        requested: EXACT_MARGINAL_DROP,
                        achieved: field.dropped_mass(),
                    });
                }
                tables.push((lo, AliasTable::new(field.values())?));
            }
            Ok((0..count as u64)
                .into_par_iter()
                .map(|j| {
                    let mut rng = StreamSpec::new(seed, j).rng();
                    (0..d)
                        .map(|i| {
                            let (lo, table) = &tables[i];
                            ((lo + table.sample(&mut rng) as i64) as f64 - b[i]) / a[i]
                        })
                        .collect()
                })
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tail_models::Marginal1d;

    #[test]
    fn deterministic_hits() {
        let law = LatticeLaw::deterministic(vec![1, 1]).unwrap();
        let s = green_mc(&law, &[vec![7, 7], vec![0, 5]], 1000, 100, 1).unwrap();
        assert_eq!(s.estimate(0).value, 1.0);
        assert_eq!(s.estimate(1).value, 0.0);
        assert_eq!(s.capped, 0);
    }

    #[test]
    fn renewal_cap_warning() {
        let law = LatticeLaw::deterministic(vec![1, 1]).unwrap();
        let s = green_mc(&law, &[vec![7, 7]], 10, 3, 1).unwrap();
        assert!(s.n_cap_warning);
        assert_eq!(s.hits[0], 0);
    }

    #[test]
    fn merge_is_order_free() {
        let law = LatticeLaw::independent(vec![Marginal1d::Uniform { lo: -1, hi: 1 }; 2]).unwrap();
        let t = vec![vec![1, 0], vec![0, 0]];
        let a = green_mc(&law, &t, 10_000, 50, 9).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let b = pool.install(|| green_mc(&law, &t, 10_000, 50, 9)).unwrap();
        assert_eq!(a, b);
        assert!(a.estimate(1).value > 0.5 && a.hits[1] > a.hits_sq[1] / 10);
    }

    #[test]
    fn one_step_tail_matches_closed_form() {
        let law = LatticeLaw::independent(vec![Marginal1d::Pareto { gamma: 0.5 }]).unwrap();
        let s = ScalingSchedule::new(std::sync::Arc::new(law.clone()));
        let est = tail_prob_mc(&law, &s, 0, 1, &[10.0, 1000.0], None, 200_000, 4).unwrap();
        for e in est {
            let p = (e.x).powf(-0.5);
            assert!((e.estimate.value - p).abs() < 4.0 * e.estimate.sigma);
        }
        let capped = tail_prob_mc(&law, &s, 0, 3, &[1.0], Some(0.5), 1000, 4).unwrap();
        assert_eq!(capped[0].hits, 0);
    }
}
