use std::sync::Arc;

use heavywalk::exact_engine::ConvMethod;
use heavywalk::scaling::ScalingSchedule;
use heavywalk::tail_models::{parse_law, LatticeLaw};
use heavywalk::theorem_bench::*;
use heavywalk::Error;

fn setup(spec: &str) -> (LatticeLaw, ScalingSchedule) {
    let law = parse_law(spec, None).unwrap();
    let sched = ScalingSchedule::new(Arc::new(law.clone()));
    (law, sched)
}

#[test]
fn llt_rejects_degenerate_law() {
    let (law, s) = setup("deterministic:1,1");
    let err = check_llt(&law, &s, &[4, 8], 3.0, None).unwrap_err();
    assert!(matches!(err, Error::Precondition(_)), "{err}");
}

#[test]
fn llt_gaussian_error_shrinks() {
    let (law, s) = setup("product:uniform(-1,1)*2");
    let r = check_llt(&law, &s, &[64, 256], 4.0, None).unwrap();
    assert!(r.ratios[1] < r.ratios[0]);
    assert_eq!(r.pass, Some(true));
}

#[test]
fn llt_levy_error_decreases() {
    let (law, s) = setup("product:pareto(0.5)*2");
    let r = check_llt(&law, &s, &[64, 128, 256], 8.0, None).unwrap();
    assert_eq!(r.pass, Some(true), "{:?}", r.ratios);
}

fn lambda_grid() -> Vec<Vec<f64>> {
    [2.0, 4.0, 8.0, 16.0]
        .iter()
        .map(|&l| vec![l, 1.0])
        .collect()
}

#[test]
fn local_bound_constant_is_stable() {
    let (law, s) = setup("product:pareto(0.5)*2");
    let r = check_lld(
        &law,
        &s,
        LldMode::Local,
        &[16, 32, 64, 128, 256],
        &lambda_grid(),
        LldSettings::default(),
    )
    .unwrap();
    assert!(r.fitted_constant.is_finite());
    assert_eq!(r.pass, Some(true), "{:?}", r.ratios);
    assert!(r.is_consistent());
}

#[test]
fn local_bound_dominated_by_general() {
    let (law, s) = setup("product:pareto(0.5)*2");
    let (compared, bad) =
        bound_domination(&law, &s, &[16, 32, 64, 128, 256], &lambda_grid(), 0.0).unwrap();
    assert_eq!(compared, 20);
    assert_eq!(bad, 0);
    let g = check_lld(
        &law,
        &s,
        LldMode::General,
        &[16, 64, 256],
        &lambda_grid(),
        LldSettings::default(),
    )
    .unwrap();
    assert!(g.fitted_constant.is_finite());
}

#[test]
fn balanced_bound_on_dependent_law() {
    let (law, s) = setup("dependent:beta=3;betas=1,1");
    let grid: Vec<Vec<f64>> = [2.0, 4.0, 8.0, 16.0, 32.0]
        .iter()
        .map(|&m| vec![m / 2.0, m / 2.0])
        .collect();
    let r = check_lld(
        &law,
        &s,
        LldMode::Balanced,
        &[8, 16],
        &grid,
        LldSettings::default(),
    )
    .unwrap();
    assert_eq!(r.grid.len(), 10, "{:?}", r.notes);
    assert!(r.fitted_constant.is_finite() && r.fitted_constant > 0.0);
}

#[test]
fn balanced_mode_needs_radial_law() {
    let (law, s) = setup("product:pareto(0.5)*2");
    let err = check_lld(
        &law,
        &s,
        LldMode::Balanced,
        &[16],
        &lambda_grid(),
        LldSettings::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Precondition(_)));
}

#[test]
fn fuk_nagaev_half_stable() {
    let (law, s) = setup("product:pareto(0.5)");
    let pts: Vec<TailPoint> = [2.0, 4.0, 8.0]
        .iter()
        .map(|&x| TailPoint {
            x_scale: x,
            y_frac: Some(1.0),
        })
        .collect();
    let r = check_fuknagaev(
        &law,
        &s,
        0,
        &[64],
        &pts,
        TailMethod::Exact {
            conv: ConvMethod::Auto,
        },
        TailBoundSettings::default(),
    )
    .unwrap();
    assert_eq!(r.grid.len(), 3);
    // at y = x the bound is n L(x) x^{-1/2}
    for p in &r.grid {
        let expect = 64.0 * p.x[0].powf(-0.5);
        assert!(
            (p.bound / expect - 1.0).abs() < 1e-9,
            "{} vs {expect}",
            p.bound
        );
    }
    assert!(r.fitted_constant.is_finite());
}

#[test]
fn vacuous_cap_matches_unconstrained_tail() {
    let (law, s) = setup("product:uniform(0,3)");
    let capped = [TailPoint {
        x_scale: 1.0,
        y_frac: Some(1.0),
    }];
    let free = [TailPoint {
        x_scale: 1.0,
        y_frac: None,
    }];
    let run = |pts: &[TailPoint]| {
        check_fuknagaev(
            &law,
            &s,
            0,
            &[16],
            pts,
            TailMethod::Exact {
                conv: ConvMethod::Naive,
            },
            TailBoundSettings::default(),
        )
    };
    // x = a_16 exceeds the largest step, so a cap at x excludes nothing
    let a = run(&capped).unwrap();
    let b = run(&free).unwrap();
    assert!(a.grid[0].y.unwrap() > 3.0);
    assert_eq!(a.grid[0].observed, b.grid[0].observed);
}

#[test]
fn fuk_nagaev_gaussian_crossover() {
    let (law, s) = setup("product:twosided(4,0.5)");
    let pts: Vec<TailPoint> = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0]
        .iter()
        .map(|&x| TailPoint {
            x_scale: x,
            y_frac: None,
        })
        .collect();
    let r = check_fuknagaev(
        &law,
        &s,
        0,
        &[256],
        &pts,
        TailMethod::Exact {
            conv: ConvMethod::Naive,
        },
        TailBoundSettings::default(),
    )
    .unwrap();
    let a = s.a_n(0, 256.0).unwrap();
    for p in &r.grid {
        let (power, expo) = (p.terms[0], p.terms[1]);
        if p.x[0] <= 2.0 * a {
            assert!(expo > power, "x = {}", p.x[0]);
        }
        if p.x[0] >= 16.0 * a {
            assert!(power > expo, "x = {}", p.x[0]);
        }
    }
    assert!(r.notes.iter().any(|n| n.contains("power term from")));
    assert!(r.rate.is_some());
    assert_eq!(r.pass, Some(true), "{:?}", r.ratios);
}

#[test]
fn transversal_exponent_general_case() {
    let nu = transversal_exponent(&[0.75, 0.75], 1, false);
    assert!((nu - 35.0 / 33.0).abs() < 1e-12);
    assert_eq!(transversal_exponent(&[0.5, 0.5], 1, true), 3.0);
}

#[test]
fn srt_centered_small() {
    let (law, s) = setup("product:pareto(0.5)*2");
    let targets: Vec<Vec<i64>> = [25, 50, 100].iter().map(|&x| vec![x, x]).collect();
    let r = check_srt(
        &law,
        &s,
        SrtRegime::Centered,
        &targets,
        &[1.0, 1.0],
        GreenMethod::Exact {
            n_max: None,
            conv: ConvMethod::Auto,
        },
        None,
        SrtSettings::default(),
    )
    .unwrap();
    assert_eq!(r.criterion, Criterion::TowardOne { tol: Some(0.2) });
    assert!(
        r.ratios.iter().all(|v| (v - 1.0).abs() < 0.05),
        "{:?}",
        r.ratios
    );
    assert!(r.is_consistent());
}

#[test]
fn srt_rejects_wrong_regime() {
    let (law, s) = setup("product:uniform(0,2)*2");
    let err = check_srt(
        &law,
        &s,
        SrtRegime::Centered,
        &[vec![64, 64]],
        &[0.0, 0.0],
        GreenMethod::Exact {
            n_max: None,
            conv: ConvMethod::Auto,
        },
        None,
        SrtSettings::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Precondition(_)), "{err}");
}

#[test]
fn srt_drift_gaussian_small() {
    let (law, s) = setup("product:uniform(0,2)*2");
    let targets: Vec<Vec<i64>> = [64, 128, 256].iter().map(|&r| vec![r, r]).collect();
    let r = check_srt(
        &law,
        &s,
        SrtRegime::Drift,
        &targets,
        &[0.0, 0.0],
        GreenMethod::Exact {
            n_max: None,
            conv: ConvMethod::Auto,
        },
        None,
        SrtSettings::default(),
    )
    .unwrap();
    assert!(
        r.ratios.iter().all(|v| (v - 1.0).abs() < 0.2),
        "{:?}",
        r.ratios
    );
    assert!(r.notes.iter().any(|n| n.contains("direction estimates")));
}

#[test]
fn away_needs_three_doublings() {
    let (law, s) = setup("product:pareto(0.5)*2");
    let targets = vec![vec![16, 64], vec![16, 128]];
    let r = check_away(
        &law,
        &s,
        AwayTheorem::Transversal,
        &targets,
        GreenMethod::Exact {
            n_max: None,
            conv: ConvMethod::Auto,
        },
        AwaySettings::default(),
    )
    .unwrap();
    assert!(r.doublings() < 3.0);
    assert_eq!(r.pass, None);
}

#[test]
fn reports_round_trip_through_json() {
    let (law, s) = setup("product:pareto(0.5)*2");
    let r = check_lld(
        &law,
        &s,
        LldMode::Local,
        &[16, 32],
        &lambda_grid(),
        LldSettings::default(),
    )
    .unwrap();
    let text = serde_json::to_string(&r).unwrap();
    let back: BoundCheckReport = serde_json::from_str(&text).unwrap();
    assert!(back.is_consistent());
    assert_eq!(back.pass, r.pass);
}
