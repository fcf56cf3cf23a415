use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numerics::stats::log_log_slope;

/// How a grid of growth statistics is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthRule {
    /// Max ratio of the last block over the max ratio of the first block.
    LastVsFirst,
    /// Max ratio over all blocks over the max ratio of all blocks but the
    /// last, i.e. the effect of extending the grid by its last block.
    ExtendedVsBase,
}

/// Verdict rule stored with a report, so the verdict can be recomputed from
/// the recorded grid alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Criterion {
    /// Fitted constant finite and the growth statistic at most `max_growth`.
    StableConstant { max_growth: f64, growth: GrowthRule },
    /// Ratios never increase along the scale.
    Decreasing,
    /// `|ratio - 1|` never increases, and the last ratio is within `tol` of 1
    /// when a tolerance is given.
    TowardOne { tol: Option<f64> },
    /// Fitted log-log slope of the ratios at most `bound`; needs the scales
    /// to span at least three doublings.
    SlopeAtMost { bound: f64 },
    /// Ratios monotone up to `sigmas` standard errors and `|slope| <= max_slope`.
    Flat { sigmas: f64, max_slope: f64 },
    /// Recorded without a verdict.
    ReportOnly,
}

/// One evaluation point of a bound check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundPoint {
    pub n: u64,
    pub x: Vec<f64>,
    /// Cap on the largest step, where the bound has one.
    pub y: Option<f64>,
    /// Grid-extension block the point belongs to.
    pub block: u32,
    pub observed: f64,
    /// Bound expression with multiplicative constants set to 1.
    pub bound: f64,
    /// Individual terms of the bound expression.
    pub terms: Vec<f64>,
    /// Error bound on `observed`.
    pub error: f64,
}

/// Observed quantity against a theorem's bound over a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheckReport {
    pub theorem: String,
    pub grid: Vec<BoundPoint>,
    pub ratios: Vec<f64>,
    /// `max ratio` over the grid.
    pub fitted_constant: f64,
    pub growth: Option<f64>,
    pub slope: Option<f64>,
    /// Fitted rate constant of the exponential terms, when there are any.
    pub rate: Option<f64>,
    pub criterion: Criterion,
    pub pass: Option<bool>,
    pub seeds: Vec<u64>,
    pub achieved_errors: Vec<f64>,
    pub notes: Vec<String>,
}

fn block_max(grid: &[BoundPoint], ratios: &[f64], pick: impl Fn(u32) -> bool) -> f64 {
    grid.iter()
        .zip(ratios)
        .filter(|(p, _)| pick(p.block))
        .map(|(_, r)| *r)
        .fold(f64::NAN, f64::max)
}

impl BoundCheckReport {
    pub fn new(theorem: impl Into<String>, grid: Vec<BoundPoint>, criterion: Criterion) -> Self {
        let mut r = BoundCheckReport {
            theorem: theorem.into(),
            achieved_errors: grid.iter().map(|p| p.error).collect(),
            grid,
            ratios: Vec::new(),
            fitted_constant: f64::NAN,
            growth: None,
            slope: None,
            rate: None,
            criterion,
            pass: None,
            seeds: Vec::new(),
            notes: Vec::new(),
        };
        r.recompute();
        r
    }

    fn ratios_of(grid: &[BoundPoint]) -> Vec<f64> {
        grid.iter().map(|p| p.observed / p.bound).collect()
    }

    fn growth_of(grid: &[BoundPoint], ratios: &[f64], rule: GrowthRule) -> Option<f64> {
        let first = grid.iter().map(|p| p.block).min()?;
        let last = grid.iter().map(|p| p.block).max()?;
        let (base, top) = match rule {
            GrowthRule::LastVsFirst => (
                block_max(grid, ratios, |b| b == first),
                block_max(grid, ratios, |b| b == last),
            ),
            GrowthRule::ExtendedVsBase => (
                block_max(grid, ratios, |b| b < last || first == last),
                block_max(grid, ratios, |_| true),
            ),
        };
        (base > 0.0).then(|| top / base)
    }

    /// Recomputes ratios, fitted constant, growth and verdict from the grid.
    pub fn recompute(&mut self) {
        self.ratios = Self::ratios_of(&self.grid);
        self.fitted_constant = self.ratios.iter().copied().fold(f64::NAN, f64::max);
        let rule = match self.criterion {
            Criterion::StableConstant { growth, .. } => growth,
            _ => GrowthRule::LastVsFirst,
        };
        self.growth = Self::growth_of(&self.grid, &self.ratios, rule);
        self.pass = self.verdict();
    }

    fn verdict(&self) -> Option<bool> {
        if self.grid.is_empty() {
            return None;
        }
        let finite = self.ratios.iter().all(|r| r.is_finite() && *r >= 0.0);
        match self.criterion {
            Criterion::StableConstant { max_growth, .. } => {
                Some(finite && self.growth.is_some_and(|g| g <= max_growth))
            }
            Criterion::ReportOnly => None,
            _ => Some(finite),
        }
    }

    /// True when the stored ratios, constant and verdict match a fresh
    /// computation from the stored grid.
    pub fn is_consistent(&self) -> bool {
        let mut fresh = self.clone();
        fresh.recompute();
        same_values(&fresh.ratios, &self.ratios)
            && same(fresh.fitted_constant, self.fitted_constant)
            && fresh.pass == self.pass
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n,x,y,block,observed,bound,ratio,error")?;
        for (p, r) in self.grid.iter().zip(&self.ratios) {
            let x: Vec<String> = p.x.iter().map(|v| v.to_string()).collect();
            let y = p.y.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{:e},{:e},{:e},{:e}",
                p.n,
                x.join(" "),
                y,
                p.block,
                p.observed,
                p.bound,
                r,
                p.error
            )?;
        }
        Ok(())
    }
}

/// One scale of a convergence study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub scale: f64,
    pub x: Vec<i64>,
    pub observed: f64,
    pub predicted: f64,
    /// Standard error (Monte Carlo) or error bound (exact) of `observed`.
    pub sigma: f64,
}

/// Sequence of observed/predicted ratios along growing scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub theorem: String,
    pub grid: Vec<ConvergencePoint>,
    pub ratios: Vec<f64>,
    /// Limit constant used in the prediction, if one applies.
    pub fitted_constant: Option<f64>,
    /// Relative spread `(max - min) / mean` of the ratios over the last
    /// decade of scales.
    pub spread: f64,
    /// Log-log slope of the ratios against the scale.
    pub slope: Option<f64>,
    pub criterion: Criterion,
    pub pass: Option<bool>,
    pub seeds: Vec<u64>,
    pub achieved_errors: Vec<f64>,
    pub notes: Vec<String>,
}

impl ConvergenceReport {
    pub fn new(
        theorem: impl Into<String>,
        grid: Vec<ConvergencePoint>,
        criterion: Criterion,
    ) -> Self {
        let mut r = ConvergenceReport {
            theorem: theorem.into(),
            achieved_errors: grid.iter().map(|p| p.sigma).collect(),
            grid,
            ratios: Vec::new(),
            fitted_constant: None,
            spread: f64::NAN,
            slope: None,
            criterion,
            pass: None,
            seeds: Vec::new(),
            notes: Vec::new(),
        };
        r.recompute();
        r
    }

    pub fn recompute(&mut self) {
        self.ratios = self.grid.iter().map(|p| p.observed / p.predicted).collect();
        let scales: Vec<f64> = self.grid.iter().map(|p| p.scale).collect();
        self.slope = log_log_slope(&scales, &self.ratios);
        self.spread = match scales.last() {
            Some(&top) => {
                let last: Vec<f64> = scales
                    .iter()
                    .zip(&self.ratios)
                    .filter(|(s, _)| **s * 10.0 > top)
                    .map(|(_, r)| *r)
                    .collect();
                let mean = last.iter().sum::<f64>() / last.len() as f64;
                let (lo, hi) = last
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &r| {
                        (a.min(r), b.max(r))
                    });
                (hi - lo) / mean
            }
            None => f64::NAN,
        };
        self.pass = self.verdict();
    }

    /// Doublings spanned by the scales.
    pub fn doublings(&self) -> f64 {
        let lo = self
            .grid
            .iter()
            .map(|p| p.scale)
            .fold(f64::INFINITY, f64::min);
        let hi = self.grid.iter().map(|p| p.scale).fold(0.0, f64::max);
        (hi / lo).log2()
    }

    fn verdict(&self) -> Option<bool> {
        let r = &self.ratios;
        if r.len() < 2 {
            return None;
        }
        let finite = r.iter().all(|v| v.is_finite());
        if !finite {
            return Some(false);
        }
        match self.criterion {
            Criterion::Decreasing => Some(r.windows(2).all(|w| w[1] <= w[0])),
            Criterion::TowardOne { tol } => {
                let dist: Vec<f64> = r.iter().map(|v| (v - 1.0).abs()).collect();
                let monotone = dist.windows(2).all(|w| w[1] <= w[0]);
                let close = tol.is_none_or(|t| dist[dist.len() - 1] <= t);
                Some(monotone && close)
            }
            Criterion::SlopeAtMost { bound } => {
                if self.doublings() < 3.0 - 1e-9 {
                    return None;
                }
                self.slope.map(|s| s <= bound)
            }
            Criterion::Flat { sigmas, max_slope } => {
                let dir = (r[r.len() - 1] - r[0]).signum();
                let monotone = self.grid.windows(2).zip(r.windows(2)).all(|(p, w)| {
                    let se = ((p[0].sigma / p[0].predicted).powi(2)
                        + (p[1].sigma / p[1].predicted).powi(2))
                    .sqrt();
                    (w[1] - w[0]) * dir >= -sigmas * se
                });
                Some(monotone && self.slope.is_some_and(|s| s.abs() <= max_slope))
            }
            Criterion::StableConstant { .. } | Criterion::ReportOnly => None,
        }
    }

    pub fn is_consistent(&self) -> bool {
        let mut fresh = self.clone();
        fresh.recompute();
        same_values(&fresh.ratios, &self.ratios)
            && fresh.pass == self.pass
            && match (fresh.slope, self.slope) {
                (Some(a), Some(b)) => same(a, b),
                (a, b) => a.is_none() && b.is_none(),
            }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "scale,x,observed,predicted,ratio,sigma")?;
        for (p, r) in self.grid.iter().zip(&self.ratios) {
            let x: Vec<String> = p.x.iter().map(|v| v.to_string()).collect();
            writeln!(
                w,
                "{},{},{:e},{:e},{:e},{:e}",
                p.scale,
                x.join(" "),
                p.observed,
                p.predicted,
                r,
                p.sigma
            )?;
        }
        Ok(())
    }
}

fn same(a: f64, b: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan()) || (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

fn same_values(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| same(*x, *y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(scale: f64, observed: f64) -> ConvergencePoint {
        ConvergencePoint {
            scale,
            x: vec![scale as i64],
            observed,
            predicted: 1.0,
            sigma: 0.0,
        }
    }

    #[test]
    fn slope_needs_three_doublings() {
        let grid = vec![point(1.0, 1.0), point(4.0, 1.0 / 64.0)];
        let r = ConvergenceReport::new("t", grid, Criterion::SlopeAtMost { bound: -2.7 });
        assert_eq!(r.pass, None);
        let grid = vec![
            point(1.0, 1.0),
            point(4.0, 1.0 / 64.0),
            point(16.0, 1.0 / 4096.0),
        ];
        let r = ConvergenceReport::new("t", grid, Criterion::SlopeAtMost { bound: -2.7 });
        assert!((r.slope.unwrap() + 3.0).abs() < 1e-12);
        assert_eq!(r.pass, Some(true));
    }

    #[test]
    fn toward_one_rejects_overshoot_growth() {
        let grid = vec![point(1.0, 0.5), point(2.0, 0.8), point(4.0, 1.3)];
        let r = ConvergenceReport::new("t", grid, Criterion::TowardOne { tol: Some(0.2) });
        assert_eq!(r.pass, Some(false));
    }

    #[test]
    fn tampered_report_is_detected() {
        let grid = vec![point(1.0, 0.5), point(2.0, 0.8), point(4.0, 0.95)];
        let mut r = ConvergenceReport::new("t", grid, Criterion::TowardOne { tol: Some(0.1) });
        assert_eq!(r.pass, Some(true));
        assert!(r.is_consistent());
        r.grid[2].observed = 0.5;
        assert!(!r.is_consistent());
    }

    #[test]
    fn growth_rules() {
        let p = |block, observed| BoundPoint {
            n: 1,
            x: vec![1.0],
            y: None,
            block,
            observed,
            bound: 1.0,
            terms: vec![1.0],
            error: 0.0,
        };
        let grid = vec![p(0, 1.0), p(1, 3.0), p(2, 1.2)];
        let crit = |growth| Criterion::StableConstant {
            max_growth: 1.5,
            growth,
        };
        let r = BoundCheckReport::new("t", grid.clone(), crit(GrowthRule::LastVsFirst));
        assert!((r.growth.unwrap() - 1.2).abs() < 1e-12);
        assert_eq!(r.pass, Some(true));
        let r = BoundCheckReport::new("t", grid, crit(GrowthRule::ExtendedVsBase));
        assert!((r.growth.unwrap() - 1.0).abs() < 1e-12);
        let grid = vec![p(0, 1.0), p(1, 2.0), p(2, 2.5)];
        let r = BoundCheckReport::new("t", grid.clone(), crit(GrowthRule::LastVsFirst));
        assert_eq!(r.pass, Some(false));
        let r = BoundCheckReport::new("t", grid, crit(GrowthRule::ExtendedVsBase));
        assert!((r.growth.unwrap() - 1.25).abs() < 1e-12);
        assert_eq!(r.pass, Some(true));
    }
}
