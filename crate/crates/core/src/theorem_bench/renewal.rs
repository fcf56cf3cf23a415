//! Green-function asymptotics along and away from the favorite direction.

use serde::{Deserialize, Serialize};

use super::report::{ConvergencePoint, ConvergenceReport, Criterion};
use crate::error::{invalid, Error, Result};
use crate::exact_engine::{default_box, green_exact, ConvMethod};
use crate::mc_engine::green_mc;
use crate::numerics::quad::integrate;
use crate::scaling::{FavoriteGeometry, Regime, ScalingSchedule};
use crate::stable_limit::{
    srt_constant_cauchy, srt_constant_centered, srt_constant_mean, StableDensityModel,
};
use crate::tail_models::LatticeLaw;

/// Which renewal statement a schedule of targets is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SrtRegime {
    /// Centered coordinates: `G(x) ~ C n_0 / prod a_{n_0}`.
    Centered,
    /// Two centered coordinates with `1/alpha_1 + 1/alpha_2 = 2`:
    /// `G(x) ~ g(0) sum_{n >= n_1} 1 / (a_n^(1) a_n^(2))`.
    CenteredMarginal,
    /// Leading drifting coordinate with finite mean.
    Drift,
    /// Leading drifting coordinate with `alpha = 1`.
    CauchyDrift,
}

/// How Green-function values are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GreenMethod {
    /// `n_max = None` picks `2.5 max n_0 + 64`, or the renewal cutoff.
    Exact {
        n_max: Option<usize>,
        conv: ConvMethod,
    },
    Mc {
        walks: u64,
        seed: u64,
        n_cap: u64,
    },
}

/// Green values with their error (remainder or standard error), the seed if
/// any, and a note when walks were cut off.
fn green_values(
    law: &LatticeLaw,
    schedule: &ScalingSchedule,
    targets: &[Vec<i64>],
    geoms: &[FavoriteGeometry],
    method: GreenMethod,
) -> Result<(Vec<(f64, f64)>, Option<u64>, Option<String>)> {
    match method {
        GreenMethod::Exact { n_max, conv } => {
            let n_max = match n_max {
                Some(n) => n,
                None => {
                    let n0 = geoms.iter().map(|g| g.n0).fold(1.0, f64::max);
                    (2.5 * n0).ceil() as usize + 64
                }
            };
            let bbox = default_box(law, schedule, targets, n_max)?;
            let rep = green_exact(law, schedule, targets, n_max, &bbox, conv)?;
            Ok((
                rep.values.iter().map(|v| (v.value, v.remainder)).collect(),
                None,
                None,
            ))
        }
        GreenMethod::Mc { walks, seed, n_cap } => {
            let stats = green_mc(law, targets, walks, n_cap, seed)?;
            let v = (0..targets.len())
                .map(|t| {
                    let e = stats.estimate(t);
                    (e.value, e.sigma)
                })
                .collect();
            let note = (stats.capped > 0)
                .then(|| format!("{} of {} walks hit the step cap", stats.capped, stats.walks));
            Ok((v, Some(seed), note))
        }
    }
}

fn scale_of(x: &[i64]) -> f64 {
    x.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0) as f64
}

/// `sum_{n >= n1} 1 / (a_n^(1) a_n^(2))`, as an integral over `log n` up to
/// `n = 1e15` plus the half-weight of the first term.
fn inverse_scale_sum(schedule: &ScalingSchedule, n1: f64) -> Result<f64> {
    let f = |s: f64| {
        let n = s.exp();
        match (schedule.a_n(0, n), schedule.a_n(1, n)) {
            (Ok(a), Ok(b)) => n / (a * b),
            _ => f64::NAN,
        }
    };
    let q = integrate(f, n1.ln(), 1e15f64.ln(), 0.0, 1e-8);
    if !q.value.is_finite() {
        return Err(invalid("scale sum did not converge"));
    }
    Ok(q.value + 0.5 * f(n1.ln()) / n1)
}

/// Settings for [`check_srt`]; `criterion = None` picks the regime default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct SrtSettings {
    pub criterion: Option<Criterion>,
}

fn default_criterion(regime: SrtRegime, has_model: bool) -> Criterion {
    match regime {
        SrtRegime::Centered => Criterion::TowardOne { tol: Some(0.2) },
        SrtRegime::CenteredMarginal => Criterion::TowardOne { tol: None },
        SrtRegime::Drift => Criterion::TowardOne { tol: Some(0.1) },
        SrtRegime::CauchyDrift if has_model => Criterion::TowardOne { tol: None },
        SrtRegime::CauchyDrift => Criterion::Flat {
            sigmas: 3.0,
            max_slope: 0.1,
        },
    }
}

/// Compares `G(x)` along a target schedule with the renewal asymptotic of
/// `regime`. The direction `t` enters the limit constant. For the
/// `alpha = 1` drift regime without a density model the check reduces to a
/// trend: `G(x) r^{d-1} / (log r)^{d-2}` with `r = max |x_i|`.
pub fn check_srt(
    law: &LatticeLaw,
    schedule: &ScalingSchedule,
    regime: SrtRegime,
    targets: &[Vec<i64>],
    t: &[f64],
    method: GreenMethod,
    model: Option<&StableDensityModel>,
    settings: SrtSettings,
) -> Result<ConvergenceReport> {
    let d = law.dim();
    if targets.is_empty() {
        return Err(invalid("no targets"));
    }
    if t.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: t.len(),
        });
    }
    let geoms: Vec<FavoriteGeometry> = targets
        .iter()
        .map(|x| schedule.typical_n(x))
        .collect::<Result<_>>()?;
    let want = match regime {
        SrtRegime::Centered | SrtRegime::CenteredMarginal => Regime::Centered,
        SrtRegime::Drift => Regime::Drift,
        SrtRegime::CauchyDrift => Regime::CauchyDrift,
    };
    if let Some(g) = geoms.iter().find(|g| g.regime != want) {
        return Err(Error::Precondition(format!(
            "target {:?} falls in the {:?} regime, not {want:?}",
            g.x, g.regime
        )));
    }
    let alphas = law.alphas();
    let s_total: f64 = alphas.iter().map(|a| 1.0 / a).sum();
    if regime == SrtRegime::CenteredMarginal && (d != 2 || (s_total - 2.0).abs() > 1e-12) {
        return Err(Error::Precondition(
            "the marginal renewal case needs d = 2 and 1/alpha_1 + 1/alpha_2 = 2".into(),
        ));
    }
    let owned;
    let model = match model {
        Some(m) => Some(m),
        None => match StableDensityModel::product_for_law(law) {
            Ok(m) => {
                owned = m;
                Some(&owned)
            }
            Err(_) if regime == SrtRegime::CauchyDrift => None,
            Err(e) => return Err(Error::Precondition(format!("missing density model: {e}"))),
        },
    };
    let mut notes = Vec::new();
    let constant = match (regime, model) {
        (SrtRegime::Centered, Some(m)) => Some(srt_constant_centered(m, t, &alphas)?),
        (SrtRegime::CenteredMarginal, Some(m)) => Some(crate::numerics::quad::Quad {
            value: m.density(&vec![0.0; d])?,
            error: 0.0,
        }),
        _ => None,
    };
    if let Some(c) = constant {
        notes.push(format!(
            "limit constant {:.6e} (quadrature error {:.1e})",
            c.value, c.error
        ));
    }
    let (values, seed, cap_note) = green_values(law, schedule, targets, &geoms, method)?;
    notes.extend(cap_note);
    let mut grid = Vec::with_capacity(targets.len());
    let mut kappa_drift: f64 = 0.0;
    for ((x, g), (value, err)) in targets.iter().zip(&geoms).zip(values) {
        let prod_a: f64 = g.a_at_n0.iter().product();
        let r = scale_of(x);
        let predicted = match (regime, model) {
            (SrtRegime::Centered, _) => constant.expect("centered constant").value * g.n0 / prod_a,
            (SrtRegime::CenteredMarginal, _) => {
                let n1 =
                    g.n.iter()
                        .copied()
                        .filter(|v| !v.is_nan())
                        .fold(0.0, f64::max);
                constant.expect("density at 0").value * inverse_scale_sum(schedule, n1)?
            }
            (SrtRegime::Drift, Some(m)) => {
                let mu0 = schedule.truncated_mean(g.i0, g.a_at_n0[g.i0]);
                let dir: Vec<f64> = g.kappa.iter().map(|k| k / mu0).collect();
                kappa_drift = kappa_drift.max(max_drift(&g.kappa, &g.kappa_2n0));
                let c = srt_constant_mean(m, t, &dir)?;
                c.value * g.window.expect("drift window") / prod_a
            }
            (SrtRegime::CauchyDrift, Some(m)) => {
                kappa_drift = kappa_drift.max(max_drift(&g.kappa_tilde, &g.kappa_tilde_2n0));
                let c = srt_constant_cauchy(m, t, &g.kappa_tilde)?;
                c.value * g.window.expect("drift window") / prod_a
            }
            (_, None) => {
                let log_r = r.ln();
                log_r.powi(d as i32 - 2) / r.powi(d as i32 - 1)
            }
        };
        grid.push(ConvergencePoint {
            scale: r,
            x: x.clone(),
            observed: value,
            predicted,
            sigma: err,
        });
    }
    if matches!(regime, SrtRegime::Drift | SrtRegime::CauchyDrift) && model.is_some() {
        notes.push(format!(
            "direction estimates move by at most {kappa_drift:.3e} between n_0 and 2 n_0"
        ));
    }
    if model.is_none() {
        notes.push("no density model: trend check of G r^(d-1) / (log r)^(d-2)".into());
    }
    let name = match regime {
        SrtRegime::Centered => "srt-centered",
        SrtRegime::CenteredMarginal => "srt-centered-marginal",
        SrtRegime::Drift => "srt-drift",
        SrtRegime::CauchyDrift => "srt-cauchy",
    };
    let criterion = settings
        .criterion
        .unwrap_or(default_criterion(regime, model.is_some()));
    let mut report = ConvergenceReport::new(name, grid, criterion);
    report.seeds = seed.into_iter().collect();
    report.notes = notes;
    Ok(report)
}

fn max_drift(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Statements about targets off the favorite direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AwayTheorem {
    /// Centered: one coordinate far beyond its typical scale. Scale is
    /// `max_i n_i / n_0`; ratio `G prod a_{n_0} / n_0`.
    Transversal,
    /// Drift: offset `s` from the drift line. Scale is `max |t_i|`; ratio
    /// `G prod a_{n_0} / a_{n_0}^(i0)`.
    DriftOffset,
    /// Centered renewal refinement with an unspecified exponent; the slope
    /// is fitted and reported.
    RenewalRefinement,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AwaySettings {
    /// Slack in the theorem's exponent.
    pub delta: f64,
    /// Fit tolerance added to the exponent bound.
    pub tol: f64,
}

impl Default for AwaySettings {
    fn default() -> Self {
        AwaySettings {
            delta: 0.1,
            tol: 0.2,
        }
    }
}

/// Decay exponent for the transversal statement: `1 + 1/alpha_{i1}` for
/// renewal laws, otherwise `(1 + 1/alpha_{i1}) (S - 1) / (S + 1)` with
/// `S = sum 1/alpha_i`.
pub fn transversal_exponent(alphas: &[f64], i1: usize, renewal: bool) -> f64 {
    let base = 1.0 + 1.0 / alphas[i1];
    if renewal {
        return base;
    }
    let s: f64 = alphas.iter().map(|a| 1.0 / a).sum();
    base * (s - 1.0) / (s + 1.0)
}

/// Fits the log-log slope of a rescaled `G` along an off-direction ray and
/// compares it with the theorem's exponent plus `delta + tol`. Fewer than
/// three doublings of scale leave the verdict open.
pub fn check_away(
    law: &LatticeLaw,
    schedule: &ScalingSchedule,
    theorem: AwayTheorem,
    targets: &[Vec<i64>],
    method: GreenMethod,
    settings: AwaySettings,
) -> Result<ConvergenceReport> {
    if targets.is_empty() {
        return Err(invalid("no targets"));
    }
    let geoms: Vec<FavoriteGeometry> = targets
        .iter()
        .map(|x| schedule.typical_n(x))
        .collect::<Result<_>>()?;
    let want = match theorem {
        AwayTheorem::DriftOffset => Regime::Drift,
        _ => Regime::Centered,
    };
    if let Some(g) = geoms.iter().find(|g| g.regime != want) {
        return Err(Error::Precondition(format!(
            "target {:?} falls in the {:?} regime, not {want:?}",
            g.x, g.regime
        )));
    }
    if theorem == AwayTheorem::RenewalRefinement && !law.is_renewal() {
        return Err(Error::Precondition(
            "the refinement applies to renewal laws".into(),
        ));
    }
    let alphas = law.alphas();
    let (values, seed, cap_note) = green_values(law, schedule, targets, &geoms, method)?;
    let mut notes: Vec<String> = cap_note.into_iter().collect();
    let mut rows = Vec::new();
    let mut off_axis = None;
    for ((x, g), (value, err)) in targets.iter().zip(&geoms).zip(values) {
        let prod_a: f64 = g.a_at_n0.iter().product();
        let (i1, scale, norm) = match theorem {
            AwayTheorem::Transversal | AwayTheorem::RenewalRefinement => {
                let (i1, ratio) =
                    g.n.iter()
                        .enumerate()
                        .filter(|(_, v)| !v.is_nan())
                        .map(|(i, v)| (i, v / g.n0))
                        .max_by(|a, b| a.1.total_cmp(&b.1))
                        .expect("some coordinate is nonzero");
                (i1, ratio, g.n0 / prod_a)
            }
            AwayTheorem::DriftOffset => {
                let (i1, s) =
                    g.t.iter()
                        .enumerate()
                        .map(|(i, v)| (i, v.abs()))
                        .max_by(|a, b| a.1.total_cmp(&b.1))
                        .expect("d >= 1");
                (i1, s, g.a_at_n0[g.i0] / prod_a)
            }
        };
        if theorem == AwayTheorem::DriftOffset && scale < 1.0 {
            notes.push(format!(
                "x = {x:?}: offset below a_n, outside the fit range; skipped"
            ));
            continue;
        }
        off_axis.get_or_insert(i1);
        rows.push(ConvergencePoint {
            scale,
            x: x.clone(),
            observed: value,
            predicted: norm,
            sigma: err,
        });
    }
    rows.sort_by(|a, b| a.scale.total_cmp(&b.scale));
    let i1 = off_axis.unwrap_or(0);
    let (name, criterion) = match theorem {
        AwayTheorem::Transversal => {
            let nu = transversal_exponent(&alphas, i1, law.is_renewal());
            notes.push(format!("exponent nu = {nu:.6}"));
            (
                "away-transversal",
                Criterion::SlopeAtMost {
                    bound: -nu + settings.delta + settings.tol,
                },
            )
        }
        AwayTheorem::DriftOffset => {
            let bound = -(1.0 + alphas[i1]) + settings.delta + settings.tol;
            ("away-offset", Criterion::SlopeAtMost { bound })
        }
        AwayTheorem::RenewalRefinement => ("away-refinement", Criterion::ReportOnly),
    };
    let mut report = ConvergenceReport::new(name, rows, criterion);
    if theorem == AwayTheorem::RenewalRefinement {
        if let Some(s) = report.slope {
            report
                .notes
                .push(format!("fitted decay exponent {:.4}", -s));
        }
    }
    report.notes.splice(0..0, notes);
    report.seeds = seed.into_iter().collect();
    Ok(report)
}
