use approx::assert_abs_diff_eq;
use gem_core::estimators::fit_ols;
use gem_core::sim::{
    aggregates_csv, bound_coverage_study, consistency_study, draw_sample, generate_dgp, k_tradeoff_study, run_study,
    true_model_check, CoverageBound, EstimatorKind, SimConfig, StudySelection,
};
use gem_core::Error;
use nalgebra::DVector;

fn small(p: usize) -> SimConfig {
    SimConfig {
        p,
        replications: 3,
        ..SimConfig::default()
    }
}

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn column_pairs(cfg: &SimConfig, seed: u64) -> Vec<f64> {
    let (d, _) = generate_dgp(&SimConfig { n: 10_000, ..cfg.clone() }, seed).unwrap();
    let cols: Vec<Vec<f64>> = (0..cfg.p).map(|j| d.x().column(j).iter().copied().collect()).collect();
    let mut out = Vec::new();
    for a in 0..cfg.p {
        for b in a + 1..cfg.p {
            out.push(corr(&cols[a], &cols[b]));
        }
    }
    out
}

#[test]
fn independent_covariates() {
    let cfg = SimConfig { rho_x: 0.0, ..small(6) };
    assert!(column_pairs(&cfg, 1).iter().all(|r| r.abs() < 0.05));
}

#[test]
fn equicorrelated_covariates() {
    let cfg = small(6);
    for r in column_pairs(&cfg, 2) {
        assert!((r - 0.9).abs() < 0.02, "{r}");
    }
}

#[test]
fn bad_correlation_is_rejected() {
    let cfg = SimConfig { rho_x: 1.0, ..small(6) };
    assert_eq!(generate_dgp(&cfg, 0).unwrap_err(), Error::BadCorrelation(1.0));
}

#[test]
fn noiseless_sample_recovers_beta() {
    let cfg = SimConfig { sigma2: 0.0, ..small(8) };
    let (raw, beta) = generate_dgp(&cfg, 3).unwrap();
    let std = raw.standardize().unwrap();
    let b = fit_ols(&std).unwrap().to_original_units(&std).unwrap();
    assert!((&b.b - &beta).amax() < 1e-8);
    assert!(b.intercept.abs() < 1e-8);
}

#[test]
fn samples_are_seed_determined() {
    let cfg = small(6);
    let beta = cfg.beta().unwrap();
    assert_eq!(draw_sample(&cfg, &beta, 50, 4).unwrap(), draw_sample(&cfg, &beta, 50, 4).unwrap());
    assert_ne!(draw_sample(&cfg, &beta, 50, 4).unwrap(), draw_sample(&cfg, &beta, 50, 5).unwrap());
}

#[test]
fn single_replication_report_is_reproducible() {
    let cfg = SimConfig { replications: 1, root_seed: 42, ..small(6) };
    let a = run_study(&cfg).unwrap();
    let b = run_study(&cfg).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert_eq!(a.boxplot_csv(), b.boxplot_csv());
}

#[test]
fn study_report_shape() {
    let cfg = SimConfig { p: 12, ..small(12) };
    let r = run_study(&cfg).unwrap();
    assert_eq!(r.failed, 0);
    assert_eq!(r.per_replication.len(), 3);
    assert_eq!(r.aggregates.len(), 2);
    let lasso = r.metric_values(EstimatorKind::Lasso, |m| m.ege);
    let mean = lasso.iter().sum::<f64>() / lasso.len() as f64;
    assert_abs_diff_eq!(r.aggregate(EstimatorKind::Lasso).unwrap().mean.ege, mean, epsilon = 1e-12);
    // Six active coefficients plus the four worst nulls, per estimator.
    assert_eq!(r.boxplot.len(), 2 * 10);
    let first_null = &r.boxplot[6];
    assert!(first_null.coefficient > 6);
    let csv = aggregates_csv(&[&r]);
    assert_eq!(csv.lines().count(), 1 + 7);
    assert!(csv.lines().next().unwrap().contains("lasso_p12_sigma2_1"));
}

#[test]
fn ols_becomes_fsr_when_underdetermined() {
    let cfg = SimConfig { n: 40, p: 60, estimators: vec![EstimatorKind::Ols], ..small(60) };
    assert_eq!(cfg.effective_estimators(), vec![EstimatorKind::Fsr]);
    let r = run_study(&SimConfig { replications: 1, ..cfg }).unwrap();
    assert_eq!(r.per_replication[0].fits[0].estimator, EstimatorKind::Fsr);
}

#[test]
fn published_preset_maps_columns() {
    let c = SimConfig::published(500, 5.0).unwrap();
    assert_eq!((c.p, c.sigma2, c.n, c.replications), (500, 25.0, 250, 50));
    assert!(SimConfig::published(300, 1.0).is_err());
}

#[test]
fn noiseless_coverage_is_total() {
    let cfg = SimConfig { sigma2: 0.0, ..small(6) };
    for bound in [CoverageBound::LightTail, CoverageBound::Gaussian] {
        let r = bound_coverage_study(&cfg, bound, 0.5, 100).unwrap();
        assert_eq!(r.coverage, 1.0, "{r:?}");
    }
    assert!(bound_coverage_study(&cfg, CoverageBound::Gaussian, 0.5, 99).is_err());
}

#[test]
fn coverage_tends_to_one_as_confidence_grows() {
    let r = bound_coverage_study(&small(6), CoverageBound::LightTail, 1.0 - 1e-9, 100).unwrap();
    assert_eq!(r.coverage, 1.0);
}

#[test]
fn leave_one_out_tradeoff_is_finite() {
    let cfg = SimConfig { n: 30, ..small(6) };
    let t = k_tradeoff_study(&cfg, &[30], 4).unwrap();
    let p = t.points[0];
    assert!(p.mean_cv_ege.is_finite() && p.var_cv_ege.is_finite() && p.mean_cv_ete.is_finite());
    assert!(matches!(k_tradeoff_study(&cfg, &[31], 4), Err(Error::BadK { .. })));
}

#[test]
fn noiseless_consistency() {
    let cfg = SimConfig {
        sigma2: 0.0,
        estimators: vec![EstimatorKind::Ols],
        replications: 5,
        ..small(6)
    };
    for point in consistency_study(&cfg, &[50, 200]).unwrap() {
        assert!(point.mean_l2_bias < 1e-8, "{point:?}");
    }
    assert!(consistency_study(&cfg, &[200, 50]).is_err());
}

#[test]
fn ols_bias_shrinks_with_sample_size() {
    let cfg = SimConfig {
        estimators: vec![EstimatorKind::Ols],
        replications: 30,
        root_seed: 8,
        ..small(6)
    };
    let pts = consistency_study(&cfg, &[100, 400, 1600]).unwrap();
    assert!(pts.windows(2).all(|w| w[1].mean_l2_bias < w[0].mean_l2_bias), "{pts:?}");
}

#[test]
fn true_model_check_edge_cases() {
    let cfg = small(6);
    let beta = cfg.beta().unwrap();
    assert_eq!(true_model_check(&cfg, &[beta.clone()], 500, 1).unwrap().winner, 0);
    let noiseless = SimConfig { sigma2: 0.0, ..cfg.clone() };
    let mut shifted = beta.clone();
    shifted[0] += 0.1;
    let c = true_model_check(&noiseless, &[shifted, beta], 500, 1).unwrap();
    assert_eq!(c.winner, 1);
    assert_eq!(c.eges[1], 0.0);
    assert!(c.eges[0] > 0.0);
    assert!(true_model_check(&cfg, &[], 10, 1).is_err());
}

#[test]
fn validation_and_cv_studies_both_run() {
    let cv = SimConfig {
        selection: StudySelection::Cv { k: 5 },
        replications: 2,
        estimators: vec![EstimatorKind::Ridge],
        ..small(6)
    };
    let r = run_study(&cv).unwrap();
    assert!(r.per_replication.iter().all(|rep| rep.fits[0].lambda.is_some()));
}

#[test]
fn population_error_closed_form() {
    let cfg = small(6);
    let beta = cfg.beta().unwrap();
    let s: f64 = beta.sum();
    let var_y = 0.1 * beta.norm_squared() + 0.9 * s * s + 1.0;
    assert_abs_diff_eq!(cfg.population_error_standardized().unwrap(), 1.0 / var_y, epsilon = 1e-15);
    // Empirical variance of y over a large sample agrees.
    let d = draw_sample(&cfg, &beta, 200_000, 9).unwrap();
    let y: &DVector<f64> = d.y();
    let m = y.mean();
    let v = y.iter().map(|t| (t - m).powi(2)).sum::<f64>() / y.len() as f64;
    assert!((v / var_y - 1.0).abs() < 0.02, "{v} vs {var_y}");
}
