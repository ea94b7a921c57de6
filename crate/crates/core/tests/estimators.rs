use approx::assert_abs_diff_eq;
use gem_core::estimators::{
    fit_bridge, fit_fsr, fit_lasso, fit_ols, fit_penalized, fit_ridge, lasso_kkt_violation, lasso_lambda_max,
    penalized_objective, Coefficients, FsrConfig, Penalty, PenaltySpec, SolverConfig,
};
use gem_core::{metrics, Dataset, Error};
use nalgebra::DVector;
use proptest::prelude::*;

fn standardized(y: &[f64], rows: &[Vec<f64>]) -> Dataset {
    Dataset::from_rows(y, rows).unwrap().standardize().unwrap()
}

fn wave_data(n: usize, p: usize) -> Dataset {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..p).map(|j| ((i * (j + 2)) as f64 * 0.37 + j as f64).sin()).collect())
        .collect();
    let y: Vec<f64> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| r.iter().enumerate().map(|(j, v)| v * (j as f64 - 1.0)).sum::<f64>() + 0.3 * (i as f64).cos())
        .collect();
    standardized(&y, &rows)
}

fn lasso_objective(d: &Dataset, b: &DVector<f64>, lambda: f64) -> f64 {
    (d.y() - d.x() * b).norm_squared() / d.n() as f64 + lambda * b.lp_norm(1)
}

#[test]
fn ols_perfect_fit() {
    let x = [1.0, 2.0, 4.0, 7.0];
    let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
    let d = standardized(&x, &rows);
    assert_abs_diff_eq!(fit_ols(&d).unwrap().b[0], 1.0, epsilon = 1e-12);
}

#[test]
fn ols_hand_normal_equations() {
    // XᵀX = [[2, 0], [0, 1]], Xᵀy = (2, 0) on raw data, so b = (1, 0).
    let d = Dataset::from_rows(&[1.0, -1.0, 0.0], &[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let b = fit_ols(&d).unwrap().b;
    assert_abs_diff_eq!(b[0], 1.0, epsilon = 1e-10);
    assert_abs_diff_eq!(b[1], 0.0, epsilon = 1e-10);
}

#[test]
fn ols_underdetermined() {
    let d = wave_data(5, 10);
    assert!(matches!(fit_ols(&d), Err(Error::Underdetermined { n: 5, p: 10 })));
}

#[test]
fn ridge_scalar_closed_form() {
    let d = standardized(&[1.0, 3.0, 2.0, 6.0], &[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]);
    let c = d.x().column(0).dot(d.y()) / 4.0;
    for lambda in [0.0, 0.5, 2.0] {
        assert_abs_diff_eq!(fit_ridge(&d, lambda).unwrap().b[0], c / (1.0 + lambda), epsilon = 1e-12);
    }
}

#[test]
fn ridge_limits() {
    let d = wave_data(30, 4);
    let ols = fit_ols(&d).unwrap();
    assert!((fit_ridge(&d, 0.0).unwrap().b - &ols.b).amax() < 1e-10);
    assert!(fit_ridge(&d, 1e6).unwrap().b.norm() < 1e-4);
}

#[test]
fn lasso_full_shrinkage_threshold() {
    let d = wave_data(25, 5);
    let lmax = lasso_lambda_max(&d);
    assert!(fit_lasso(&d, lmax, 1e-8, 1000).unwrap().b.iter().all(|&v| v == 0.0));
    assert!(fit_lasso(&d, 0.99 * lmax, 1e-8, 1000).unwrap().nnz() > 0);
}

#[test]
fn lasso_lambda_zero_is_ols() {
    let d = wave_data(30, 4);
    let b = fit_lasso(&d, 0.0, 1e-12, 100_000).unwrap().b;
    assert!((b - fit_ols(&d).unwrap().b).amax() < 1e-6);
}

#[test]
fn lasso_two_covariates_against_grid_search() {
    let d = wave_data(12, 2);
    let lambda = 0.3 * lasso_lambda_max(&d);
    let fit = fit_lasso(&d, lambda, 1e-12, 100_000).unwrap();
    let ours = lasso_objective(&d, &fit.b, lambda);

    let mut best = (f64::INFINITY, 0.0, 0.0);
    let steps = 6000;
    for i in 0..=steps {
        let b0 = -3.0 + 6.0 * i as f64 / steps as f64;
        for j in 0..=steps {
            let b1 = -3.0 + 6.0 * j as f64 / steps as f64;
            let v = lasso_objective(&d, &DVector::from_vec(vec![b0, b1]), lambda);
            if v < best.0 {
                best = (v, b0, b1);
            }
        }
    }
    // Refine the best cell by alternating bisection on each coordinate.
    let (mut b0, mut b1) = (best.1, best.2);
    for _ in 0..200 {
        for axis in 0..2 {
            let (mut lo, mut hi) = if axis == 0 { (b0 - 1e-3, b0 + 1e-3) } else { (b1 - 1e-3, b1 + 1e-3) };
            for _ in 0..100 {
                let m = 0.5 * (lo + hi);
                let at = |t: f64| {
                    let v = if axis == 0 { vec![t, b1] } else { vec![b0, t] };
                    lasso_objective(&d, &DVector::from_vec(v), lambda)
                };
                if at(m - 1e-12) < at(m + 1e-12) {
                    hi = m;
                } else {
                    lo = m;
                }
            }
            if axis == 0 {
                b0 = 0.5 * (lo + hi);
            } else {
                b1 = 0.5 * (lo + hi);
            }
        }
    }
    let oracle = lasso_objective(&d, &DVector::from_vec(vec![b0, b1]), lambda);
    assert!(ours <= oracle + 1e-9, "ours {ours}, oracle {oracle}");
    assert_abs_diff_eq!(ours, oracle, epsilon = 1e-6);
}

#[test]
fn bridge_quartic_against_golden_section() {
    let d = standardized(&[0.5, 1.5, -1.0, 2.0], &[vec![0.2], vec![1.1], vec![-0.7], vec![1.9]]);
    let (lambda, gamma) = (0.4, 4.0);
    let f = |t: f64| (d.y() - d.x().column(0) * t).norm_squared() / 4.0 + lambda * t.abs().powf(gamma);
    let (mut lo, mut hi) = (-3.0f64, 3.0f64);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let (m1, m2) = (hi - phi * (hi - lo), lo + phi * (hi - lo));
        if f(m1) <= f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let fit = fit_bridge(&d, lambda, gamma, 1e-12, 1000).unwrap();
    assert_abs_diff_eq!(fit.b[0], 0.5 * (lo + hi), epsilon = 1e-6);
}

#[test]
fn bridge_reductions() {
    let d = wave_data(20, 3);
    let ridge = fit_ridge(&d, 0.2).unwrap();
    assert!((fit_bridge(&d, 0.2, 2.0, 1e-12, 1000).unwrap().b - ridge.b).amax() < 1e-8);
    let ols = fit_ols(&d).unwrap();
    assert!((fit_bridge(&d, 0.0, 1.5, 1e-10, 1000).unwrap().b - ols.b).amax() < 1e-8);
}

#[test]
fn fsr_single_active_covariate() {
    let rows: Vec<Vec<f64>> = (0..40)
        .map(|i| {
            let t = i as f64;
            vec![(0.7 * t).sin(), (1.3 * t).cos(), (0.21 * t * t).sin()]
        })
        .collect();
    let y: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let d = standardized(&y, &rows);
    let fit = fit_fsr(&d, &FsrConfig::new(0.01, 100_000, 0.005).unwrap());
    assert!((fit.b[0] - 1.0).abs() <= 0.01 + 1e-12);
    assert_eq!(fit.b[1], 0.0);
    assert_eq!(fit.b[2], 0.0);
}

#[test]
fn fsr_orthogonal_design_tracks_correlations() {
    // Orthogonal, standardized columns; y = 2x₁ + x₂ gives correlations 2:1.
    let x1 = [1.0, -1.0, 1.0, -1.0];
    let x2 = [1.0, 1.0, -1.0, -1.0];
    let rows: Vec<Vec<f64>> = (0..4).map(|i| vec![x1[i], x2[i]]).collect();
    let y: Vec<f64> = (0..4).map(|i| 2.0 * x1[i] + x2[i]).collect();
    let d = standardized(&y, &rows);
    let step = 1e-3;
    let fit = fit_fsr(&d, &FsrConfig::new(step, 1_000_000, step).unwrap());
    let c0 = d.x().tr_mul(d.y()) / 4.0;
    assert!((fit.b[0] - c0[0]).abs() <= 2.0 * step);
    assert!((fit.b[1] - c0[1]).abs() <= 2.0 * step);
}

#[test]
fn fsr_zero_iterations() {
    let d = wave_data(10, 3);
    let cfg = FsrConfig {
        step: 0.01,
        max_iters: 0,
        corr_tol: 1e-6,
    };
    let fit = fit_fsr(&d, &cfg);
    assert!(fit.b.iter().all(|&v| v == 0.0));
    assert!(!fit.converged);
    assert!(FsrConfig::new(0.01, 0, 1e-6).is_err());
}

#[test]
fn objective_hand_cases() {
    let d = Dataset::from_rows(&[1.0, -1.0], &[vec![1.0], vec![-1.0]]).unwrap();
    let b = Coefficients::from_vec(vec![0.5]);
    let spec = PenaltySpec::new(Penalty::Lasso, 1.0).unwrap();
    assert_abs_diff_eq!(penalized_objective(&b, &d, spec).unwrap(), 0.75, epsilon = 1e-15);
    let s = wave_data(15, 3);
    let zero = Coefficients::zeros(3);
    let none = PenaltySpec::new(Penalty::Ridge, 0.0).unwrap();
    assert_abs_diff_eq!(penalized_objective(&zero, &s, none).unwrap(), 1.0, epsilon = 1e-12);
    assert_eq!(
        penalized_objective(&b, &d, PenaltySpec::new(Penalty::Lasso, 0.0).unwrap()).unwrap(),
        metrics::ete(&b, &d).unwrap()
    );
}

#[test]
fn original_units_predictions_agree() {
    let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 3.0 + 10.0, ((i * i) % 7) as f64]).collect();
    let y: Vec<f64> = rows.iter().map(|r| 0.5 * r[0] - 2.0 * r[1] + 4.0).collect();
    let raw = Dataset::from_rows(&y, &rows).unwrap();
    let std = raw.standardize().unwrap();
    let fit = fit_ols(&std).unwrap();
    let orig = fit.to_original_units(&std).unwrap();
    assert_abs_diff_eq!(orig.b[0], 0.5, epsilon = 1e-10);
    assert_abs_diff_eq!(orig.b[1], -2.0, epsilon = 1e-10);
    assert_abs_diff_eq!(orig.intercept, 4.0, epsilon = 1e-9);
}

fn arb_dataset() -> impl Strategy<Value = Dataset> {
    (2usize..5, 0u64..u64::MAX).prop_map(|(p, seed)| {
        let n = 12 + p * 3;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..p)
                    .map(|j| {
                        let h = gem_core::rng::derive_seed(seed, (i * 31 + j) as u64);
                        (h >> 11) as f64 / (1u64 << 53) as f64 - 0.5
                    })
                    .collect()
            })
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let h = gem_core::rng::derive_seed(seed ^ 0xabcdef, i as u64);
                r.iter().sum::<f64>() + (h >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect();
        standardized(&y, &rows)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lasso_satisfies_subgradient_conditions(d in arb_dataset(), frac in 0.01f64..1.2) {
        let lambda = frac * lasso_lambda_max(&d);
        let fit = fit_lasso(&d, lambda, 1e-10, 100_000).unwrap();
        prop_assert!(lasso_kkt_violation(&fit.b, &d, lambda) <= 1e-9);
    }

    #[test]
    fn lasso_l1_norm_shrinks_with_lambda(d in arb_dataset(), a in 0.01f64..1.0, b in 0.01f64..1.0) {
        let lmax = lasso_lambda_max(&d);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let small = fit_lasso(&d, lo * lmax, 1e-12, 100_000).unwrap();
        let large = fit_lasso(&d, hi * lmax, 1e-12, 100_000).unwrap();
        prop_assert!(large.l1_norm() <= small.l1_norm() + 1e-8);
    }

    #[test]
    fn ridge_gradient_vanishes(d in arb_dataset(), lambda in 0.0f64..5.0) {
        let b = fit_ridge(&d, lambda).unwrap().b;
        let n = d.n() as f64;
        let grad = (d.x().tr_mul(&(d.x() * &b - d.y())) * (2.0 / n)) + &b * (2.0 * lambda);
        prop_assert!(grad.amax() < 1e-10);
    }

    #[test]
    fn penalized_fit_beats_perturbations(d in arb_dataset(), gamma in 1.0f64..4.0, frac in 0.05f64..0.8, dir in 0usize..4) {
        let penalty = Penalty::from_gamma(gamma).unwrap();
        let lambda = frac * lasso_lambda_max(&d);
        let spec = PenaltySpec::new(penalty, lambda).unwrap();
        let fit = fit_penalized(&d, spec, None, &SolverConfig::default()).unwrap();
        let base = penalized_objective(&fit, &d, spec).unwrap();
        let mut moved = fit.clone();
        let j = dir % d.p();
        moved.b[j] += 1e-3;
        prop_assert!(penalized_objective(&moved, &d, spec).unwrap() >= base - 1e-12);
        moved.b[j] -= 2e-3;
        prop_assert!(penalized_objective(&moved, &d, spec).unwrap() >= base - 1e-12);
    }
}
