//! Capped-increment tail bounds for one coordinate.

use serde::{Deserialize, Serialize};

use super::local::largest_admissible_rate;
use super::report::{BoundCheckReport, BoundPoint, Criterion, GrowthRule};
use crate::error::{invalid, Error, Result};
use crate::exact_engine::{tail_prob_exact, ConvMethod};
use crate::mc_engine::tail_prob_mc;
use crate::scaling::ScalingSchedule;
use crate::tail_models::LatticeLaw;

/// One grid point: level `x = x_scale * a_n` and cap `y = y_frac * x`
/// (rounded down, at least 1). `y_frac = None` drops the cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub x_scale: f64,
    pub y_frac: Option<f64>,
}

/// How tail probabilities are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TailMethod {
    Exact { conv: ConvMethod },
    Mc { walks: u64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailBoundSettings {
    pub max_growth: f64,
    /// Exponent loss for `alpha = 1`.
    pub epsilon: f64,
    pub rate_exponents: (i32, i32),
    /// Points whose value is below `resolution * error` are skipped.
    pub resolution: f64,
}

impl Default for TailBoundSettings {
    fn default() -> Self {
        TailBoundSettings {
            max_growth: 1.5,
            epsilon: 0.1,
            rate_exponents: (-12, 4),
            resolution: 100.0,
        }
    }
}

struct Setting {
    alpha: f64,
    n: f64,
    a: f64,
    x: f64,
    y: Option<f64>,
}

/// Right side with unit constants, split into its power and exponential
/// terms.
fn tail_bound(law: &LatticeLaw, i: usize, s: &Setting, rate: f64, eps: f64) -> (f64, f64) {
    let spec = law.marginal_spec(i);
    let Setting { alpha, n, a, x, y } = *s;
    let gauss = |t: f64| {
        let sigma = law.truncated_moments(i, t).1;
        (-rate * x * x / (n * sigma)).exp()
    };
    match y {
        None if alpha == 2.0 => (n * spec.phi.eval(x) * x.powf(-spec.gamma), gauss(x)),
        None => (n * spec.l.eval(x) * x.powf(-alpha), 0.0),
        Some(y) if alpha == 2.0 => {
            let base = (y / x) * n * y.powf(-spec.gamma) * spec.phi.eval(y);
            (base.powf(x / (2.0 * y)), gauss(y))
        }
        Some(y) if alpha == 1.0 => {
            let base = (y / x) * n * spec.l.eval(y) / y;
            (
                base.powf((1.0 - eps) * x / y),
                (-(x / a).powf(1.0 / eps)).exp(),
            )
        }
        Some(y) => {
            let base = (y / x) * n * spec.l.eval(y) * y.powf(-alpha);
            (base.powf(x / y), 0.0)
        }
    }
}

/// Compares `P(S_n^(i) - b_n^(i) >= x, max_k X_k^(i) <= y)` with the
/// capped-increment bound. Block `k` holds the points whose `x / a_n` lies in
/// the `k`-th octave above the smallest one, so growth reads how the fitted
/// constant moves as the x-range doubles.
pub fn check_fuknagaev(
    law: &LatticeLaw,
    schedule: &ScalingSchedule,
    i: usize,
    n_grid: &[u64],
    points: &[TailPoint],
    method: TailMethod,
    settings: TailBoundSettings,
) -> Result<BoundCheckReport> {
    if i >= law.dim() {
        return Err(Error::DimensionMismatch {
            expected: law.dim(),
            got: i + 1,
        });
    }
    if points.is_empty() || n_grid.is_empty() {
        return Err(invalid("empty grid"));
    }
    let alpha = law.marginal_spec(i).alpha;
    if let Some(p) = points
        .iter()
        .find(|p| p.y_frac.is_some_and(|f| !(f > 0.0 && f <= 1.0)))
    {
        return Err(Error::Precondition(format!(
            "cap fraction must lie in (0, 1], got {:?}",
            p.y_frac
        )));
    }
    let base_octave = points
        .iter()
        .map(|p| p.x_scale.log2().floor() as i64)
        .min()
        .unwrap_or(0);
    let mut notes = Vec::new();
    let mut rows: Vec<(Setting, u32, f64, f64)> = Vec::new();
    let mut seeds = Vec::new();
    for &n in n_grid {
        let nf = n as f64;
        let a = schedule.a_n(i, nf)?;
        // points sharing a cap share one computation
        let mut caps: Vec<Option<i64>> = Vec::new();
        for p in points {
            let x = p.x_scale * a;
            let cap = p.y_frac.map(|f| ((f * x).floor() as i64).max(1));
            if !caps.contains(&cap) {
                caps.push(cap);
            }
        }
        for cap in caps {
            let group: Vec<&TailPoint> = points
                .iter()
                .filter(|p| {
                    p.y_frac
                        .map(|f| ((f * p.x_scale * a).floor() as i64).max(1))
                        == cap
                })
                .collect();
            let levels: Vec<f64> = group.iter().map(|p| p.x_scale * a).collect();
            let values: Vec<(f64, f64)> = match method {
                TailMethod::Exact { conv } => {
                    tail_prob_exact(law, schedule, i, n as usize, &levels, cap, conv)?
                        .into_iter()
                        .map(|t| (t.value, t.error))
                        .collect()
                }
                TailMethod::Mc { walks, seed } => {
                    if !seeds.contains(&seed) {
                        seeds.push(seed);
                    }
                    tail_prob_mc(
                        law,
                        schedule,
                        i,
                        n,
                        &levels,
                        cap.map(|c| c as f64),
                        walks,
                        seed,
                    )?
                    .into_iter()
                    .map(|t| (t.estimate.value, t.estimate.sigma))
                    .collect()
                }
            };
            for (p, (value, error)) in group.into_iter().zip(values) {
                let x = p.x_scale * a;
                if alpha == 1.0 && x < a {
                    notes.push(format!("n = {n}, x = {x:.1} is below a_n; skipped"));
                    continue;
                }
                if value <= settings.resolution * error {
                    notes.push(format!(
                        "n = {n}, x = {x:.1}: value {value:.3e} within resolution of error {error:.1e}; skipped"
                    ));
                    continue;
                }
                let block = (p.x_scale.log2().floor() as i64 - base_octave) as u32;
                let setting = Setting {
                    alpha,
                    n: nf,
                    a,
                    x,
                    y: cap.map(|c| c as f64),
                };
                rows.push((setting, block, value, error));
            }
        }
    }
    let rate = (alpha == 2.0).then(|| {
        largest_admissible_rate(settings.rate_exponents, |rate| {
            rows.iter()
                .filter(|r| r.1 == 0)
                .map(|(s, _, v, _)| {
                    let (p, e) = tail_bound(law, i, s, rate, settings.epsilon);
                    v / (p + e)
                })
                .fold(0.0, f64::max)
        })
    });
    let grid = rows
        .iter()
        .map(|(s, block, value, error)| {
            let (p, e) = tail_bound(law, i, s, rate.unwrap_or(0.0), settings.epsilon);
            BoundPoint {
                n: s.n as u64,
                x: vec![s.x],
                y: s.y,
                block: *block,
                observed: *value,
                bound: p + e,
                terms: vec![p, e],
                error: *error,
            }
        })
        .collect::<Vec<_>>();
    if alpha == 2.0 {
        if let Some(note) = crossover_note(&grid) {
            notes.push(note);
        }
    }
    let mut report = BoundCheckReport::new(
        "fuk-nagaev",
        grid,
        Criterion::StableConstant {
            max_growth: settings.max_growth,
            growth: GrowthRule::ExtendedVsBase,
        },
    );
    report.rate = rate;
    report.seeds = seeds;
    report.notes = notes;
    Ok(report)
}

/// Where the exponential term stops dominating the power term.
fn crossover_note(grid: &[BoundPoint]) -> Option<String> {
    let last_exp = grid
        .iter()
        .filter(|p| p.terms[1] > p.terms[0])
        .map(|p| p.x[0])
        .fold(f64::NAN, f64::max);
    let first_pow = grid
        .iter()
        .filter(|p| p.terms[0] >= p.terms[1])
        .map(|p| p.x[0])
        .fold(f64::NAN, f64::min);
    match (last_exp.is_nan(), first_pow.is_nan()) {
        (true, true) => None,
        (false, true) => Some(format!(
            "exponential term dominates on the whole grid (up to x = {last_exp:.1})"
        )),
        (true, false) => Some(format!(
            "power term dominates on the whole grid (from x = {first_pow:.1})"
        )),
        (false, false) => Some(format!(
            "exponential term dominates up to x = {last_exp:.1}; power term from x = {first_pow:.1}"
        )),
    }
}
