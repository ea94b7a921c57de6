//! Monte Carlo studies on the equicorrelated Gaussian design.
//!
//! Covariates follow the one-factor construction
//! `x_j = √ρ·z₀ + √(1 − ρ)·z_j`, which gives unit variances and pairwise
//! correlation exactly `ρ`. The outcome is `y = Xβ + u` where `β` carries the
//! active coefficients first and zeros after.
//!
//! Every replication draws from its own seed, derived from the root seed and
//! the replication index, so studies are parallel and bit-reproducible.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{self, OlsBoundMode};
use crate::data::{make_folds, split_validation, Dataset};
use crate::error::{Error, Result};
use crate::estimators::{fit_fsr, fit_ols, fit_penalized, Coefficients, FsrConfig, Penalty, PenaltySpec};
use crate::linalg::{compensated_mean, sample_variance};
use crate::metrics::{self, FitMetrics};
use crate::rng::{derive_seed, seeded};
use crate::selector::{lambda_grid, select, SelectOptions, SelectionMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Lasso,
    Ridge,
    Ols,
    Fsr,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Lasso => "lasso",
            EstimatorKind::Ridge => "ridge",
            EstimatorKind::Ols => "ols",
            EstimatorKind::Fsr => "fsr",
        }
    }

    fn penalty(&self) -> Option<Penalty> {
        match self {
            EstimatorKind::Lasso => Some(Penalty::Lasso),
            EstimatorKind::Ridge => Some(Penalty::Ridge),
            _ => None,
        }
    }
}

/// Tuning-parameter selection used inside each replication; fold and split
/// seeds come from the replication seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StudySelection {
    Validation { ratio: f64 },
    Cv { k: usize },
}

impl StudySelection {
    fn with_seed(self, seed: u64) -> SelectionMode {
        match self {
            StudySelection::Validation { ratio } => SelectionMode::Validation { ratio, seed },
            StudySelection::Cv { k } => SelectionMode::Cv { k, seed },
        }
    }

    fn ratio(self) -> f64 {
        match self {
            StudySelection::Validation { ratio } => ratio,
            StudySelection::Cv { k } => 1.0 - 1.0 / k as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Noise {
    #[default]
    Gaussian,
    /// Student-t rescaled to variance `sigma2`; needs `df > 2`.
    StudentT { df: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    /// Noise variance.
    pub sigma2: f64,
    pub beta1: Vec<f64>,
    pub rho_x: f64,
    pub replications: usize,
    pub root_seed: u64,
    pub estimators: Vec<EstimatorKind>,
    pub selection: StudySelection,
    pub noise: Noise,
    /// Rows in the independent sample that scores each fit.
    pub n_holdout: usize,
    pub grid_points: usize,
    /// Smallest λ as a fraction of λ_max; `None` picks 1e-4 when the
    /// selection training part has more rows than covariates and 1e-3
    /// otherwise.
    pub min_ratio: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 250,
            p: 200,
            sigma2: 1.0,
            beta1: vec![2.0, 4.0, 6.0, 8.0, 10.0, 12.0],
            rho_x: 0.9,
            replications: 50,
            root_seed: 0,
            estimators: vec![EstimatorKind::Lasso, EstimatorKind::Ols],
            selection: StudySelection::Validation { ratio: 0.8 },
            noise: Noise::Gaussian,
            n_holdout: 250,
            grid_points: 100,
            min_ratio: None,
        }
    }
}

/// The four published regimes as `(p, column label)`.
pub const PUBLISHED_REGIMES: [(usize, f64); 4] = [(200, 1.0), (500, 1.0), (200, 5.0), (500, 5.0)];

impl SimConfig {
    /// One column of the published lasso versus OLS/FSR comparison. The
    /// column labelled 5 matches a noise standard deviation of 5, so its
    /// noise variance is 25.
    pub fn published(p: usize, column: f64) -> Result<Self> {
        if p != 200 && p != 500 {
            return Err(Error::InvalidArgument(format!("published preset needs p in {{200, 500}}, got {p}")));
        }
        let sigma2 = if column == 1.0 {
            1.0
        } else if column == 5.0 {
            25.0
        } else {
            return Err(Error::InvalidArgument(format!(
                "published preset needs sigma2 column in {{1, 5}}, got {column}"
            )));
        };
        Ok(Self {
            p,
            sigma2,
            ..Self::default()
        })
    }

    pub fn beta(&self) -> Result<DVector<f64>> {
        if self.beta1.len() > self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                found: self.beta1.len(),
            });
        }
        Ok(DVector::from_fn(self.p, |j, _| self.beta1.get(j).copied().unwrap_or(0.0)))
    }

    fn validate(&self) -> Result<()> {
        if !(self.rho_x >= 0.0 && self.rho_x < 1.0) {
            return Err(Error::BadCorrelation(self.rho_x));
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma2 = {} must be >= 0", self.sigma2)));
        }
        if self.n < 2 || self.p == 0 {
            return Err(Error::InvalidArgument("need n >= 2 and p >= 1".into()));
        }
        if let Noise::StudentT { df } = self.noise {
            if !(df > 2.0) {
                return Err(Error::InvalidArgument(format!("Student-t noise needs df > 2, got {df}")));
            }
        }
        self.beta().map(|_| ())
    }

    fn resolved_min_ratio(&self) -> f64 {
        let n_t = (self.selection.ratio() * self.n as f64).round() as usize;
        self.min_ratio
            .unwrap_or(if n_t > self.p { 1e-4 } else { 1e-3 })
    }

    /// Estimator set with OLS swapped for FSR when the design is not of
    /// full column rank.
    pub fn effective_estimators(&self) -> Vec<EstimatorKind> {
        let mut out: Vec<EstimatorKind> = Vec::new();
        for &e in &self.estimators {
            let e = self.effective_estimator(e);
            if !out.contains(&e) {
                out.push(e);
            }
        }
        out
    }

    fn effective_estimator(&self, kind: EstimatorKind) -> EstimatorKind {
        if kind == EstimatorKind::Ols && self.p >= self.n {
            EstimatorKind::Fsr
        } else {
            kind
        }
    }

    fn regime(&self) -> String {
        format!("p{}_sigma2_{}", self.p, self.sigma2)
    }

    /// Error of the true coefficients on standardized data: `σ²/Var(y)`.
    pub fn population_error_standardized(&self) -> Result<f64> {
        let beta = self.beta()?;
        let s = beta.sum();
        let signal = (1.0 - self.rho_x) * beta.norm_squared() + self.rho_x * s * s;
        let var_y = signal + self.sigma2;
        if !(var_y > 0.0) {
            return Err(Error::ZeroTss);
        }
        Ok(self.sigma2 / var_y)
    }
}

/// Draw `n` rows from the configured design with coefficients `beta`.
pub fn draw_sample(cfg: &SimConfig, beta: &DVector<f64>, n: usize, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    if beta.len() != cfg.p {
        return Err(Error::DimensionMismatch {
            expected: cfg.p,
            found: beta.len(),
        });
    }
    let mut rng = seeded(seed);
    let (a, c) = (cfg.rho_x.sqrt(), (1.0 - cfg.rho_x).sqrt());
    let sd = cfg.sigma2.sqrt();
    let student = match cfg.noise {
        Noise::StudentT { df } => Some((
            StudentT::new(df).map_err(|e| Error::InvalidArgument(e.to_string()))?,
            ((df - 2.0) / df).sqrt(),
        )),
        Noise::Gaussian => None,
    };
    let mut x = DMatrix::zeros(n, cfg.p);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let z0: f64 = rng.sample(StandardNormal);
        for j in 0..cfg.p {
            let zj: f64 = rng.sample(StandardNormal);
            x[(i, j)] = a * z0 + c * zj;
        }
        let u = match &student {
            Some((t, scale)) => t.sample(&mut rng) * scale,
            None => rng.sample::<f64, _>(StandardNormal),
        };
        y[i] = x.row(i).transpose().dot(beta) + sd * u;
    }
    Dataset::new(y, x)
}

/// One sample of `cfg.n` rows and the true coefficients.
pub fn generate_dgp(cfg: &SimConfig, seed: u64) -> Result<(Dataset, DVector<f64>)> {
    cfg.validate()?;
    let beta = cfg.beta()?;
    let data = draw_sample(cfg, &beta, cfg.n, seed)?;
    Ok((data, beta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorFit {
    pub estimator: EstimatorKind,
    /// Scored in original units: training sample and independent holdout.
    pub metrics: FitMetrics,
    pub lambda: Option<f64>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub index: usize,
    pub seed: u64,
    pub fits: Vec<EstimatorFit>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorAggregate {
    pub estimator: EstimatorKind,
    pub replications_used: usize,
    pub mean: FitMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotSeries {
    pub estimator: EstimatorKind,
    /// `b1`, `b2`, ... in display order.
    pub label: String,
    /// 1-based covariate index.
    pub coefficient: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub config: SimConfig,
    pub estimators: Vec<EstimatorKind>,
    pub per_replication: Vec<ReplicationResult>,
    pub aggregates: Vec<EstimatorAggregate>,
    pub boxplot: Vec<BoxplotSeries>,
    pub failed: usize,
}

/// Fit one estimator on a raw training sample; returns coefficients in
/// original units and the selected λ for penalized families.
fn fit_kind(
    kind: EstimatorKind,
    raw: &Dataset,
    cfg: &SimConfig,
    seed: u64,
) -> Result<(Coefficients, Option<f64>)> {
    let std = raw.standardize()?;
    let (fit, lambda) = match kind.penalty() {
        Some(penalty) => {
            let grid = lambda_grid(&std, cfg.grid_points, cfg.resolved_min_ratio())?;
            let opts = SelectOptions::default();
            let report = select(raw, penalty, &grid, cfg.selection.with_seed(seed), &opts)?;
            let fit = match cfg.selection {
                // The path holds training-part fits; refit on the full
                // sample, warm-starting down the grid to the selected λ.
                StudySelection::Validation { .. } => {
                    let mut warm: Option<Coefficients> = None;
                    for &lambda in &grid.values()[..=report.best_index] {
                        let spec = PenaltySpec::new(penalty, lambda)?;
                        warm = Some(fit_penalized(&std, spec, warm.as_ref().map(|c| &c.b), &opts.solver)?);
                    }
                    warm.expect("grid is non-empty")
                }
                StudySelection::Cv { .. } => report.best,
            };
            (fit, Some(report.best_lambda))
        }
        None if kind == EstimatorKind::Ols && raw.n() > raw.p() => (fit_ols(&std)?, None),
        None => (fit_fsr(&std, &FsrConfig::default_for(&std)), None),
    };
    Ok((fit.to_original_units(&std)?, lambda))
}

fn run_replication(cfg: &SimConfig, kinds: &[EstimatorKind], index: usize) -> Result<Vec<EstimatorFit>> {
    let seed = derive_seed(cfg.root_seed, index as u64);
    let beta = cfg.beta()?;
    let train = draw_sample(cfg, &beta, cfg.n, derive_seed(seed, 0))?;
    let holdout = draw_sample(cfg, &beta, cfg.n_holdout, derive_seed(seed, 1))?;
    kinds
        .iter()
        .map(|&kind| {
            let (coef, lambda) = fit_kind(kind, &train, cfg, derive_seed(seed, 2))?;
            let m = metrics::gr2(&coef, &train, &holdout)?.with_bias(&coef, &beta)?;
            Ok(EstimatorFit {
                estimator: kind,
                metrics: m,
                lambda,
                coefficients: coef.b.iter().copied().collect(),
                intercept: coef.intercept,
            })
        })
        .collect()
}

fn mean_metrics(fits: &[&FitMetrics]) -> FitMetrics {
    let mean = |f: &dyn Fn(&FitMetrics) -> f64| {
        compensated_mean(&fits.iter().map(|m| f(m)).collect::<Vec<_>>())
    };
    FitMetrics {
        ete: mean(&|m| m.ete),
        ege: mean(&|m| m.ege),
        r2_t: mean(&|m| m.r2_t),
        r2_s: mean(&|m| m.r2_s),
        gr2: mean(&|m| m.gr2),
        l2_bias: Some(mean(&|m| m.l2_bias.unwrap_or(f64::NAN))),
        l1_bias: Some(mean(&|m| m.l1_bias.unwrap_or(f64::NAN))),
    }
}

const WORST_NULLS: usize = 4;

fn boxplot_for(kind: EstimatorKind, fits: &[&EstimatorFit], n_active: usize) -> Vec<BoxplotSeries> {
    let p = fits.first().map_or(0, |f| f.coefficients.len());
    let column = |j: usize| fits.iter().map(|f| f.coefficients[j]).collect::<Vec<f64>>();
    let mut nulls: Vec<(usize, f64)> = (n_active..p)
        .map(|j| (j, compensated_mean(&column(j).iter().map(|v| v.abs()).collect::<Vec<_>>())))
        .collect();
    // Stable sort keeps the lower index first on ties.
    nulls.sort_by(|a, b| b.1.total_cmp(&a.1));
    (0..n_active.min(p))
        .chain(nulls.iter().take(WORST_NULLS).map(|&(j, _)| j))
        .enumerate()
        .map(|(rank, j)| BoxplotSeries {
            estimator: kind,
            label: format!("b{}", rank + 1),
            coefficient: j + 1,
            values: column(j),
        })
        .collect()
}

/// Run every replication, aggregate, and fail when more than a fifth of
/// the replications fail.
pub fn run_study(cfg: &SimConfig) -> Result<SimulationReport> {
    cfg.validate()?;
    if cfg.estimators.is_empty() {
        return Err(Error::InvalidArgument("estimator set is empty".into()));
    }
    if cfg.replications == 0 {
        return Err(Error::InvalidArgument("replications must be positive".into()));
    }
    let kinds = cfg.effective_estimators();
    let per_replication: Vec<ReplicationResult> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(cfg.root_seed, r as u64);
            match run_replication(cfg, &kinds, r) {
                Ok(fits) => ReplicationResult {
                    index: r,
                    seed,
                    fits,
                    error: None,
                },
                Err(e) => {
                    log::warn!("replication {r} failed: {e}");
                    ReplicationResult {
                        index: r,
                        seed,
                        fits: Vec::new(),
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    let failed = per_replication.iter().filter(|r| r.error.is_some()).count();
    if failed * 5 > cfg.replications || failed == cfg.replications {
        return Err(Error::TooManyFailures {
            failed,
            total: cfg.replications,
        });
    }
    let mut aggregates = Vec::new();
    let mut boxplot = Vec::new();
    for (e, &kind) in kinds.iter().enumerate() {
        let fits: Vec<&EstimatorFit> = per_replication
            .iter()
            .filter(|r| r.error.is_none())
            .map(|r| &r.fits[e])
            .collect();
        let metrics: Vec<&FitMetrics> = fits.iter().map(|f| &f.metrics).collect();
        aggregates.push(EstimatorAggregate {
            estimator: kind,
            replications_used: fits.len(),
            mean: mean_metrics(&metrics),
        });
        boxplot.extend(boxplot_for(kind, &fits, cfg.beta1.len()));
    }
    Ok(SimulationReport {
        config: cfg.clone(),
        estimators: kinds,
        per_replication,
        aggregates,
        boxplot,
        failed,
    })
}

impl SimulationReport {
    pub fn aggregate(&self, kind: EstimatorKind) -> Option<&EstimatorAggregate> {
        self.aggregates.iter().find(|a| a.estimator == kind)
    }

    fn fits(&self, kind: EstimatorKind) -> impl Iterator<Item = &EstimatorFit> {
        self.per_replication
            .iter()
            .filter(|r| r.error.is_none())
            .flat_map(move |r| r.fits.iter().filter(move |f| f.estimator == kind))
    }

    /// Per-replication values of one estimator's metric.
    pub fn metric_values(&self, kind: EstimatorKind, f: impl Fn(&FitMetrics) -> f64) -> Vec<f64> {
        self.fits(kind).map(|fit| f(&fit.metrics)).collect()
    }

    /// `estimator,replication,label,coefficient,value`.
    pub fn boxplot_csv(&self) -> String {
        let mut out = String::from("estimator,replication,label,coefficient,value\n");
        for s in &self.boxplot {
            let reps = self.per_replication.iter().filter(|r| r.error.is_none());
            for (r, v) in reps.zip(&s.values) {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    s.estimator.name(),
                    r.index,
                    s.label,
                    s.coefficient,
                    v
                ));
            }
        }
        out
    }

    /// Equal-width histogram of GR² per estimator over its observed range.
    pub fn gr2_histogram_csv(&self, bins: usize) -> String {
        let bins = bins.max(1);
        let mut out = String::from("estimator,bin_lo,bin_hi,count\n");
        for &kind in &self.estimators {
            let vals = self.metric_values(kind, |m| m.gr2);
            if vals.is_empty() {
                continue;
            }
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
            let mut counts = vec![0usize; bins];
            for v in &vals {
                let b = (((v - lo) / width) as usize).min(bins - 1);
                counts[b] += 1;
            }
            for (b, c) in counts.iter().enumerate() {
                let a = lo + b as f64 * width;
                out.push_str(&format!("{},{},{},{}\n", kind.name(), a, a + width, c));
            }
        }
        out
    }

    pub fn manifest_json(&self) -> Result<String> {
        let seeds: Vec<serde_json::Value> = self
            .per_replication
            .iter()
            .map(|r| serde_json::json!({ "replication": r.index, "seed": r.seed, "error": r.error }))
            .collect();
        let v = serde_json::json!({
            "config": self.config,
            "estimators": self.estimators,
            "failed": self.failed,
            "replication_seeds": seeds,
            "aggregates": self.aggregates,
        });
        serde_json::to_string_pretty(&v).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }
}

/// Metric rows by estimator-and-regime columns, in the order
/// Bias, Bias_l1, eTE, eGE, R2_t, R2_s, GR2.
pub fn aggregates_csv(reports: &[&SimulationReport]) -> String {
    let mut cols: Vec<(String, &FitMetrics)> = Vec::new();
    for r in reports {
        for a in &r.aggregates {
            cols.push((format!("{}_{}", a.estimator.name(), r.config.regime()), &a.mean));
        }
    }
    let mut out = String::from("measure");
    for (name, _) in &cols {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    let fields: Vec<Vec<String>> = cols.iter().map(|(_, m)| m.csv_fields()).collect();
    for (i, label) in FitMetrics::CSV_LABELS.iter().enumerate() {
        out.push_str(label);
        for f in &fields {
            out.push(',');
            out.push_str(&f[i]);
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageBound {
    /// Validation bound with a light tail whose loss variance is plugged in
    /// from the training residuals.
    LightTail,
    /// Least-squares validation bound under Gaussian noise with the
    /// unbiased residual variance.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub bound: CoverageBound,
    pub varpi: f64,
    pub reps: usize,
    pub covered: usize,
    pub coverage: f64,
    /// `ϖ(1 − 1/n_t)`.
    pub probability_floor: f64,
    /// Binomial standard error at the floor.
    pub standard_error: f64,
    pub mean_bound: f64,
    pub mean_ege: f64,
}

impl CoverageReport {
    /// Coverage at least the floor less three standard errors.
    pub fn meets_floor(&self) -> bool {
        self.coverage >= self.probability_floor - 3.0 * self.standard_error
    }
}

/// Fraction of replications in which the held-out error of an OLS fit lies
/// below the validation bound. The test part is mapped through the
/// training constants so the fit is scored as a fixed predictor.
pub fn bound_coverage_study(
    cfg: &SimConfig,
    bound: CoverageBound,
    varpi: f64,
    reps: usize,
) -> Result<CoverageReport> {
    cfg.validate()?;
    if reps < 100 {
        return Err(Error::InvalidArgument(format!("coverage study needs reps >= 100, got {reps}")));
    }
    let ratio = cfg.selection.ratio();
    let outcomes: Vec<(bool, f64, f64, usize)> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(cfg.root_seed, r as u64);
            let (data, _) = generate_dgp(cfg, derive_seed(seed, 0))?;
            let split = split_validation(&data, ratio, derive_seed(seed, 1))?;
            let train = &split.train;
            let test = split.test_in_train_scale()?;
            let fit = if train.n() > train.p() {
                fit_ols(train)?
            } else {
                fit_fsr(train, &FsrConfig::default_for(train))
            };
            let (n_t, n_s, h) = (train.n(), test.n(), train.p());
            let ete = metrics::ete(&fit, train)?;
            let ege = metrics::ege(&fit, &test)?;
            let report = match bound {
                CoverageBound::LightTail => {
                    let losses: Vec<f64> = fit.residuals(train)?.iter().map(|e| e * e).collect();
                    let tail = bounds::estimate_tail(&losses, 4.0)?;
                    bounds::ege_bound_validation(&bounds::BoundInputs {
                        n_t,
                        n_s,
                        h,
                        eta: 1.0 / n_t as f64,
                        varpi,
                        tail,
                        ete,
                    })?
                }
                CoverageBound::Gaussian => {
                    let dof = n_t.saturating_sub(h).max(1) as f64;
                    let sigma2 = ete * n_t as f64 / dof;
                    bounds::ols_ege_bound(ete, n_t, n_s, h, varpi, sigma2, OlsBoundMode::Validation)?
                }
            };
            let slack = 64.0 * f64::EPSILON * metrics::tss(&test);
            Ok((ege <= report.bound_value + slack, report.bound_value, ege, n_t))
        })
        .collect::<Result<_>>()?;
    let covered = outcomes.iter().filter(|o| o.0).count();
    let n_t = outcomes[0].3 as f64;
    let floor = varpi * (1.0 - 1.0 / n_t);
    let finite: Vec<f64> = outcomes.iter().map(|o| o.1).filter(|b| b.is_finite()).collect();
    Ok(CoverageReport {
        bound,
        varpi,
        reps,
        covered,
        coverage: covered as f64 / reps as f64,
        probability_floor: floor,
        standard_error: (floor * (1.0 - floor) / reps as f64).sqrt(),
        mean_bound: if finite.len() == reps {
            compensated_mean(&finite)
        } else {
            f64::INFINITY
        },
        mean_ege: compensated_mean(&outcomes.iter().map(|o| o.2).collect::<Vec<_>>()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KTradeoffPoint {
    pub k: usize,
    /// Mean over outer replications of the K-round averaged eGE.
    pub mean_cv_ege: f64,
    pub var_cv_ege: f64,
    pub mean_cv_ete: f64,
    /// `|mean_cv_ete − population error|` on the standardized scale.
    pub ete_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KTradeoff {
    pub population_error: f64,
    pub points: Vec<KTradeoffPoint>,
}

/// Repeated K-fold cross-validation of OLS (FSR when a training part has
/// no more rows than covariates) on fresh samples, one sample per outer
/// replication shared by every K. Each part is standardized by its own
/// moments.
pub fn k_tradeoff_study(cfg: &SimConfig, k_list: &[usize], outer_reps: usize) -> Result<KTradeoff> {
    cfg.validate()?;
    if outer_reps < 2 {
        return Err(Error::InvalidArgument("outer_reps must be at least 2".into()));
    }
    if let Some(&k) = k_list.iter().find(|&&k| k < 2 || k > cfg.n) {
        return Err(Error::BadK { k, n: cfg.n });
    }
    let per_rep: Vec<Vec<(f64, f64)>> = (0..outer_reps)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(cfg.root_seed, r as u64);
            let (data, _) = generate_dgp(cfg, derive_seed(seed, 0))?;
            k_list
                .iter()
                .map(|&k| {
                    let folds = make_folds(&data, k, derive_seed(seed, k as u64))?;
                    let mut etes = Vec::with_capacity(k);
                    let mut eges = Vec::with_capacity(k);
                    for q in 0..k {
                        let split = folds.round(&data, q)?;
                        let fit = if split.train.n() > split.train.p() {
                            fit_ols(&split.train)?
                        } else {
                            fit_fsr(&split.train, &FsrConfig::default_for(&split.train))
                        };
                        etes.push(metrics::ete(&fit, &split.train)?);
                        eges.push(metrics::ege(&fit, &split.test)?);
                    }
                    Ok((compensated_mean(&etes), compensated_mean(&eges)))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let population_error = cfg.population_error_standardized()?;
    let points = k_list
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let etes: Vec<f64> = per_rep.iter().map(|r| r[i].0).collect();
            let eges: Vec<f64> = per_rep.iter().map(|r| r[i].1).collect();
            let mean_cv_ete = compensated_mean(&etes);
            KTradeoffPoint {
                k,
                mean_cv_ege: compensated_mean(&eges),
                var_cv_ege: sample_variance(&eges),
                mean_cv_ete,
                ete_gap: (mean_cv_ete - population_error).abs(),
            }
        })
        .collect();
    Ok(KTradeoff {
        population_error,
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyPoint {
    pub n: usize,
    pub mean_l2_bias: f64,
    pub standard_error: f64,
    pub reps: usize,
}

/// Mean `‖b − β‖₂` in original units for the first configured estimator,
/// over `base.replications` samples at each size in `n_list`.
pub fn consistency_study(base: &SimConfig, n_list: &[usize]) -> Result<Vec<ConsistencyPoint>> {
    base.validate()?;
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("n_list must be strictly increasing".into()));
    }
    let kind = *base
        .estimators
        .first()
        .ok_or_else(|| Error::InvalidArgument("estimator set is empty".into()))?;
    let beta = base.beta()?;
    n_list
        .iter()
        .map(|&n| {
            let cfg = SimConfig { n, ..base.clone() };
            let kind = cfg.effective_estimator(kind);
            let biases: Vec<f64> = (0..cfg.replications)
                .into_par_iter()
                .map(|r| {
                    let seed = derive_seed(derive_seed(cfg.root_seed, n as u64), r as u64);
                    let data = draw_sample(&cfg, &beta, n, derive_seed(seed, 0))?;
                    let (coef, _) = fit_kind(kind, &data, &cfg, derive_seed(seed, 2))?;
                    metrics::l2_bias(&coef, &beta)
                })
                .collect::<Result<_>>()?;
            Ok(ConsistencyPoint {
                n,
                mean_l2_bias: compensated_mean(&biases),
                standard_error: (sample_variance(&biases) / biases.len() as f64).sqrt(),
                reps: biases.len(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateCheck {
    pub winner: usize,
    pub eges: Vec<f64>,
}

/// Score fixed coefficient vectors (no intercept, original units) on one
/// fresh sample of `n_large` rows and return the index of the smallest eGE;
/// ties go to the earlier candidate.
pub fn true_model_check(
    cfg: &SimConfig,
    candidates: &[DVector<f64>],
    n_large: usize,
    seed: u64,
) -> Result<CandidateCheck> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidates".into()));
    }
    let beta = cfg.beta()?;
    let test = draw_sample(cfg, &beta, n_large, seed)?;
    let eges: Vec<f64> = candidates
        .iter()
        .map(|c| metrics::ege(&Coefficients::from_vec(c.iter().copied().collect()), &test))
        .collect::<Result<_>>()?;
    let winner = eges
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v < eges[best] { i } else { best });
    Ok(CandidateCheck { winner, eges })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    assert_eq!(x.len(), y.len(), "spearman needs equal lengths");
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    cov / (vx * vy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_hand_values() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
        // Ranks (1, 2.5, 2.5) against (1, 2, 3).
        let r = spearman(&[0.0, 5.0, 5.0], &[1.0, 2.0, 3.0]);
        assert!((r - 0.866_025_403_784_438_6).abs() < 1e-12);
    }

    #[test]
    fn column_five_is_variance_twentyfive() {
        assert_eq!(SimConfig::published(500, 5.0).unwrap().sigma2, 25.0);
        assert!(SimConfig::published(300, 1.0).is_err());
    }

    #[test]
    fn ols_becomes_fsr_when_underdetermined() {
        let cfg = SimConfig {
            p: 500,
            ..SimConfig::default()
        };
        assert_eq!(cfg.effective_estimators(), vec![EstimatorKind::Lasso, EstimatorKind::Fsr]);
    }

    #[test]
    fn population_error_independent_case() {
        let cfg = SimConfig {
            p: 2,
            beta1: vec![1.0, 1.0],
            rho_x: 0.0,
            sigma2: 2.0,
            ..SimConfig::default()
        };
        assert_eq!(cfg.population_error_standardized().unwrap(), 0.5);
    }
}
