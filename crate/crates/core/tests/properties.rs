use std::sync::Arc;

use heavywalk::exact_engine::{
    convolve, marginal_nstep, nstep_distribution, ConvMethod, LatticeBox, LatticeField,
    StepSchedule,
};
use heavywalk::mc_engine::green_mc;
use heavywalk::scaling::ScalingSchedule;
use heavywalk::stable_limit::{srt_constant_mean, StableDensityModel, StableMarginal};
use heavywalk::tail_models::{LatticeLaw, Marginal1d, TabulatedLaw};
use heavywalk::theorem_bench::{
    bound_domination, ConvergencePoint, ConvergenceReport, Criterion,
};
use proptest::prelude::*;

fn marginal() -> impl Strategy<Value = Marginal1d> {
    prop_oneof![
        (0.3f64..3.0).prop_map(|gamma| Marginal1d::Pareto { gamma }),
        (0.3f64..4.0, 0.0f64..=1.0).prop_map(|(gamma, p)| Marginal1d::TwoSided {
            gamma,
            p,
            rho: 0.0
        }),
        (-3i64..=0, 1i64..=4).prop_map(|(lo, w)| Marginal1d::Uniform { lo, hi: lo + w }),
    ]
}

fn random_table() -> impl Strategy<Value = TabulatedLaw> {
    (1usize..=6, 1usize..=6, -2i64..=1, -2i64..=1)
        .prop_flat_map(|(w, h, lx, ly)| {
            prop::collection::vec(0.0f64..1.0, w * h).prop_map(move |mut probs| {
                probs[0] += 1e-3;
                let total: f64 = probs.iter().sum();
                probs.iter_mut().for_each(|p| *p /= total);
                TabulatedLaw {
                    lower: vec![lx, ly],
                    shape: vec![w, h],
                    probs,
                    residual: 0.0,
                }
            })
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn product_pmf_factorizes(m1 in marginal(), m2 in marginal(), x in -20i64..20, y in -20i64..20) {
        let law = LatticeLaw::independent(vec![m1.clone(), m2.clone()]).unwrap();
        let joint = law.pmf(&[x, y]).unwrap();
        prop_assert_eq!(joint, m1.pmf(x) * m2.pmf(y));
    }

    #[test]
    fn tail_differences_are_pmf(m in marginal(), k in 0i64..1024) {
        let diff = m.upper_tail(k as f64) - m.upper_tail(k as f64 + 1.0);
        let p = m.pmf(k + 1);
        prop_assert!((diff - p).abs() <= 1e-14 + 1e-10 * p, "{diff} vs {p}");
    }

    #[test]
    fn truncated_second_moment_nondecreasing(m in marginal(), x in 1.0f64..1e5, f in 1.0f64..8.0) {
        let law = LatticeLaw::independent(vec![m]).unwrap();
        let (_, s1) = law.truncated_moments(0, x);
        let (_, s2) = law.truncated_moments(0, x * f);
        prop_assert!(s2 >= s1 * (1.0 - 1e-12));
    }

    #[test]
    fn renewal_truncated_mean_nondecreasing(gamma in 0.3f64..3.0, x in 1.0f64..1e5, f in 1.0f64..8.0) {
        let law = LatticeLaw::independent(vec![Marginal1d::Pareto { gamma }]).unwrap();
        let (m1, _) = law.truncated_moments(0, x);
        let (m2, _) = law.truncated_moments(0, x * f);
        prop_assert!(m2 >= m1 * (1.0 - 1e-12));
    }

    #[test]
    fn favorite_point_inverts_typical_time(log_n in 8u32..=20, t in 0.5f64..2.0) {
        let law = Arc::new(LatticeLaw::independent(vec![Marginal1d::Pareto { gamma: 0.5 }; 2]).unwrap());
        let s = ScalingSchedule::new(law);
        let n = 2f64.powi(log_n as i32);
        let x = s.favorite_point(n, &[t, t]).unwrap();
        let g = s.typical_n(&x).unwrap();
        let expect = n * t.powf(0.5);
        prop_assert!((g.n0 / expect - 1.0).abs() < 0.02, "{} vs {expect}", g.n0);
    }

    #[test]
    fn drift_typical_time_within_one(log_n in 8u32..=20) {
        let law = Arc::new(LatticeLaw::independent(vec![Marginal1d::Uniform { lo: 0, hi: 2 }; 2]).unwrap());
        let s = ScalingSchedule::new(law);
        let n = 2f64.powi(log_n as i32);
        let x = s.favorite_point(n, &[0.0, 0.0]).unwrap();
        let g = s.typical_n(&x).unwrap();
        prop_assert!((g.n0 - n).abs() <= 1.0, "{} vs {n}", g.n0);
    }

    #[test]
    fn line_constant_scales_inversely(lambda in 0.2f64..5.0, k2 in 0.3f64..3.0, t2 in -1.0f64..1.0) {
        let g = StableMarginal::gaussian(0.4).unwrap();
        let model = StableDensityModel::Product(vec![g.clone(), g]);
        let kappa = [1.0, k2];
        let base = srt_constant_mean(&model, &[0.0, t2], &kappa).unwrap().value;
        let scaled = srt_constant_mean(&model, &[0.0, t2], &[lambda, lambda * k2]).unwrap().value;
        prop_assert!(base > 0.0);
        prop_assert!((scaled * lambda / base - 1.0).abs() < 1e-6);
    }

    #[test]
    fn fft_matches_naive(table in random_table(), other in random_table()) {
        let law = LatticeLaw::tabulated(table).unwrap();
        let law2 = LatticeLaw::tabulated(other).unwrap();
        let bbox = LatticeBox::cube(2, -64, 63).unwrap();
        let f = LatticeField::one_step(&law, &bbox).unwrap();
        let g = LatticeField::one_step(&law2, &LatticeBox::cube(2, -8, 8).unwrap()).unwrap();
        let a = convolve(&f, &g, &bbox, ConvMethod::Naive).unwrap();
        let b = convolve(&f, &g, &bbox, ConvMethod::Fft).unwrap();
        let err = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn mass_bookkeeping_holds(table in random_table(), n in 2usize..40) {
        let law = LatticeLaw::tabulated(table).unwrap();
        let bbox = LatticeBox::cube(2, -30, 30).unwrap();
        let f = nstep_distribution(&law, n, &bbox, StepSchedule::Linear, ConvMethod::Auto).unwrap();
        let total = f.total() + f.dropped_mass();
        prop_assert!(total >= 1.0 - 1e-9 && total <= 1.0 + 1e-12, "{total}");
    }

    #[test]
    fn renewal_fields_vanish_past_cutoff(gamma in 0.3f64..2.0, n in 2usize..30, x in 1i64..40) {
        let law = LatticeLaw::independent(vec![Marginal1d::Pareto { gamma }]).unwrap();
        let f = marginal_nstep(&law, 0, n, 0, 64, None, StepSchedule::Linear, ConvMethod::Fft).unwrap();
        if (n as i64) > x {
            prop_assert_eq!(f.get(&[x]), 0.0);
        }
    }

    #[test]
    fn exchangeable_fields_are_symmetric(m in marginal(), n in 2usize..12) {
        let law = LatticeLaw::independent(vec![m.clone(), m]).unwrap();
        let bbox = LatticeBox::cube(2, -16, 16).unwrap();
        let f = nstep_distribution(&law, n, &bbox, StepSchedule::Binary, ConvMethod::Fft).unwrap();
        for x in -16..=16 {
            for y in -16..=16 {
                prop_assert!((f.get(&[x, y]) - f.get(&[y, x])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn local_bound_never_exceeds_general(gamma in 0.3f64..1.9, l1 in 1.0f64..20.0, l2 in 1.0f64..20.0, n in 4u64..512, rate in 0.0f64..4.0) {
        let law = Arc::new(LatticeLaw::independent(vec![
            Marginal1d::Pareto { gamma },
            Marginal1d::TwoSided { gamma: 3.0, p: 0.5, rho: 0.0 },
        ]).unwrap());
        let s = ScalingSchedule::new(law.clone());
        let (compared, bad) = bound_domination(&law, &s, &[n], &[vec![l1, l2]], rate).unwrap();
        prop_assert_eq!(compared, 1);
        prop_assert_eq!(bad, 0);
    }

    #[test]
    fn slope_ignores_constant_factor(c in 1e-6f64..1e6, ys in prop::collection::vec(1e-3f64..1.0, 4..8)) {
        let pts = |scale_g: f64| -> Vec<ConvergencePoint> {
            ys.iter().enumerate().map(|(k, y)| ConvergencePoint {
                scale: 2f64.powi(k as i32),
                x: vec![k as i64],
                observed: scale_g * y,
                predicted: 1.0,
                sigma: 0.0,
            }).collect()
        };
        let crit = Criterion::SlopeAtMost { bound: 0.0 };
        let a = ConvergenceReport::new("t", pts(1.0), crit);
        let b = ConvergenceReport::new("t", pts(c), crit);
        prop_assert!((a.slope.unwrap() - b.slope.unwrap()).abs() < 1e-9);
        prop_assert_eq!(a.pass, b.pass);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn mc_counts_ignore_thread_count(seed in any::<u64>()) {
        let law = LatticeLaw::independent(vec![Marginal1d::Pareto { gamma: 0.5 }; 2]).unwrap();
        let targets = vec![vec![3, 3], vec![10, 4]];
        let run = |threads| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
                .install(|| green_mc(&law, &targets, 20_000, 1_000, seed).unwrap())
        };
        prop_assert_eq!(run(1), run(4));
    }
}
