mod common;

use balpath::diagnostics::{ess, interpolate, report_path};
use balpath::family::{weights_from_eta, WeightKind};
use balpath::path::make_lambda_sequence;
use balpath::{fit_balnet, PathOptions, PenaltySpec, SolverConfig, Target};
use proptest::prelude::*;

use common::{columns, gaussian_dataset, imbalance};

fn target_strategy() -> impl Strategy<Value = Target> {
    prop_oneof![
        Just(Target::Att),
        Just(Target::Ate),
        Just(Target::Treated),
        Just(Target::Control)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn retained_points_respect_the_box_bound(
        n in 30usize..120,
        p in 1usize..6,
        shift in 0.0f64..1.0,
        seed in 0u64..1000,
        target in target_strategy(),
    ) {
        let ds = gaussian_dataset(n, p, shift, seed);
        let conf = SolverConfig::default();
        let options = PathOptions { nlambda: 20, ..PathOptions::default() };
        let fit = fit_balnet(&ds, target, &PenaltySpec::lasso(p), &options, &conf).unwrap();
        let x = columns(&fit.design);
        for (path, cfg) in fit.paths.iter().zip(fit.arm_configs()) {
            for sol in &path.solutions {
                prop_assert!(sol.converged);
                let w = weights_from_eta(&sol.linear_predictor(&fit.design), &cfg);
                let imb = imbalance(&x, &w, &cfg.arm, cfg.weight_kind == WeightKind::Odds, cfg.norm);
                let worst = imb.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                prop_assert!(worst <= sol.lambda + 1e-6, "{} > {}", worst, sol.lambda);
                // unpenalized intercept: the arm weights sum to c
                let total: f64 = w.iter().zip(&cfg.arm).filter(|(_, &a)| a).map(|(v, _)| v).sum();
                prop_assert!((total - cfg.norm).abs() <= 10.0 * conf.tol * cfg.norm,
                    "sum {} vs c {}", total, cfg.norm);
            }
        }
    }

    #[test]
    fn lambda_sequences_decrease_between_exact_endpoints(
        lmax in 1e-3f64..1e3,
        ratio in 1e-4f64..0.9,
        nlambda in 2usize..150,
        by_imbalance in any::<bool>(),
    ) {
        let seq = if by_imbalance {
            make_lambda_sequence(lmax, nlambda, Some(lmax * ratio), None).unwrap()
        } else {
            make_lambda_sequence(lmax, nlambda, None, Some(ratio)).unwrap()
        };
        prop_assert_eq!(seq.values.len(), nlambda);
        prop_assert_eq!(seq.values[0], lmax);
        prop_assert_eq!(seq.values[nlambda - 1], seq.lambda_min);
        prop_assert!(seq.values.windows(2).all(|w| w[1] < w[0]));
        let step = (seq.values[1] / seq.values[0]).ln();
        for w in seq.values.windows(2) {
            prop_assert!(((w[1] / w[0]).ln() - step).abs() < 1e-9);
        }
    }

    #[test]
    fn ess_is_a_percentage_and_full_only_for_equal_weights(
        weights in prop::collection::vec(0.0f64..10.0, 1..50),
        scale in 0.1f64..5.0,
    ) {
        prop_assume!(weights.iter().any(|&w| w > 0.0));
        let e = ess(&weights).unwrap();
        prop_assert!(e > 0.0 && e <= 100.0 + 1e-9);
        let equal = vec![scale; weights.len()];
        prop_assert!((ess(&equal).unwrap() - 100.0).abs() < 1e-9);
        let spread = weights.iter().fold(0.0f64, |a, &w| a.max(w)) - weights.iter().fold(f64::MAX, |a, &w| a.min(w));
        if spread > 1e-3 {
            prop_assert!(e < 100.0);
        }
    }

    #[test]
    fn interpolation_is_exact_on_the_grid_and_continuous(
        seed in 0u64..500,
        target in target_strategy(),
        t in 0.0f64..1.0,
    ) {
        let ds = gaussian_dataset(80, 4, 0.5, seed);
        let options = PathOptions { nlambda: 15, ..PathOptions::default() };
        let fit = fit_balnet(&ds, target, &PenaltySpec::lasso(4), &options, &SolverConfig::default()).unwrap();
        for (path, cfg) in fit.paths.iter().zip(fit.arm_configs()) {
            for sol in &path.solutions {
                let at = interpolate(path, sol.lambda).unwrap();
                prop_assert_eq!(at.intercept, sol.intercept);
                prop_assert_eq!(&at.coefs, &sol.coefs);
            }
            for k in 0..path.len().saturating_sub(1) {
                let (hi, lo) = (&path.solutions[k], &path.solutions[k + 1]);
                let lambda = lo.lambda + t * (hi.lambda - lo.lambda);
                let mid = interpolate(path, lambda).unwrap();
                // a convex combination of the neighbours, so it moves continuously
                let a = hi.coefs.to_dense(4);
                let b = lo.coefs.to_dense(4);
                let m = mid.coefs.to_dense(4);
                for j in 0..4 {
                    prop_assert!((m[j] - (t * a[j] + (1.0 - t) * b[j])).abs() < 1e-9);
                }
                let eps = 1e-9 * hi.lambda;
                let near = interpolate(path, hi.lambda - eps).unwrap();
                prop_assert!((near.intercept - hi.intercept).abs() < 1e-6);
                let r = report_path(&fit.design, &cfg, path, target, lambda).unwrap();
                prop_assert!(r.weight_cv == (100.0 / r.ess - 1.0).max(0.0).sqrt());
            }
        }
    }
}
