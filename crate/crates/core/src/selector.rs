//! Penalty selection by minimal empirical generalization error.
//!
//! A decreasing λ grid is swept with warm starts on the training part of a
//! validation split, or on every training part of a K-fold partition. The
//! selected model is the grid point with the smallest held-out error; ties
//! go to the larger λ.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{make_folds, split_validation, Dataset, SplitPair};
use crate::error::{Error, Result};
use crate::estimators::{fit_penalized, lasso_lambda_max, Coefficients, Penalty, PenaltySpec, SolverConfig};
use crate::metrics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    values: Vec<f64>,
    lambda_max: f64,
    n_points: usize,
}

impl LambdaGrid {
    /// Arbitrary non-negative values, sorted into strictly decreasing order.
    pub fn from_values(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("lambda grid is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::BadPenalty("lambda values must be finite and >= 0".into()));
        }
        values.sort_by(|a, b| b.total_cmp(a));
        values.dedup();
        Ok(Self {
            lambda_max: values[0],
            n_points: values.len(),
            values,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `n_points` log-spaced values from `max_j |(2/n) x_jᵀy|` down to
/// `min_ratio` times that, plus an exact 0 when `n > p`. When every
/// correlation is zero the grid is `{0}`.
pub fn lambda_grid(train: &Dataset, n_points: usize, min_ratio: f64) -> Result<LambdaGrid> {
    if n_points < 2 {
        return Err(Error::InvalidArgument(format!("n_points = {n_points} must be >= 2")));
    }
    if !(min_ratio > 0.0 && min_ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("min_ratio = {min_ratio} outside (0, 1)")));
    }
    let lambda_max = lasso_lambda_max(train);
    if lambda_max == 0.0 {
        return Ok(LambdaGrid {
            values: vec![0.0],
            lambda_max,
            n_points: 1,
        });
    }
    let log_ratio = min_ratio.ln();
    let last = (n_points - 1) as f64;
    let mut values: Vec<f64> = (0..n_points)
        .map(|k| lambda_max * (log_ratio * k as f64 / last).exp())
        .collect();
    values[0] = lambda_max;
    if train.n() > train.p() {
        values.push(0.0);
    }
    Ok(LambdaGrid {
        n_points: values.len(),
        values,
        lambda_max,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SelectionMode {
    Validation { ratio: f64, seed: u64 },
    Cv { k: usize, seed: u64 },
}

/// How the held-out part is expressed before scoring.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestScaling {
    /// Each part standardized by its own moments.
    #[default]
    Independent,
    /// Held-out rows mapped through the training part's constants.
    TrainConstants,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectOptions {
    pub solver: SolverConfig,
    pub test_scaling: TestScaling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEntry {
    pub lambda: f64,
    /// Validation: the fit on the training part. CV: the fit on the full
    /// sample at this λ.
    pub coefficients: Option<Coefficients>,
    /// K-round averages under CV.
    pub ete: f64,
    pub ege: f64,
    pub r2_t: f64,
    pub r2_s: f64,
    pub error: Option<String>,
}

impl PathEntry {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Per-round results at the selected λ under CV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundFit {
    pub coefficients: Coefficients,
    pub ete: f64,
    pub ege: f64,
    pub n_t: usize,
    pub n_s: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub penalty: Penalty,
    pub mode: SelectionMode,
    pub test_scaling: TestScaling,
    pub path: Vec<PathEntry>,
    pub best_index: usize,
    pub best_lambda: f64,
    pub best: Coefficients,
    pub gr2_of_best: f64,
    /// Training and held-out sizes (round 0 under CV).
    pub n_t: usize,
    pub n_s: usize,
    pub rounds: Vec<RoundFit>,
}

impl SelectionReport {
    pub fn best_entry(&self) -> &PathEntry {
        &self.path[self.best_index]
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    /// One row per λ: `lambda,eTE,eGE,l1_norm,nnz`. Failed entries leave the
    /// numeric fields empty.
    pub fn path_csv(&self) -> String {
        let mut out = String::from("lambda,eTE,eGE,l1_norm,nnz\n");
        for e in &self.path {
            match (&e.coefficients, e.failed()) {
                (Some(c), false) => out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    e.lambda,
                    e.ete,
                    e.ege,
                    c.l1_norm(),
                    c.nnz()
                )),
                _ => out.push_str(&format!("{},,,,\n", e.lambda)),
            }
        }
        out
    }
}

struct PointFit {
    coefficients: Coefficients,
    ete: f64,
    ege: f64,
    r2_t: f64,
    r2_s: f64,
}

pub(crate) fn held_out(split: &SplitPair, scaling: TestScaling) -> Result<Dataset> {
    match scaling {
        TestScaling::Independent => Ok(split.test.clone()),
        TestScaling::TrainConstants => split.test_in_train_scale(),
    }
}

/// Warm-started sweep over the grid on one split.
fn sweep(
    train: &Dataset,
    test: &Dataset,
    penalty: Penalty,
    grid: &LambdaGrid,
    solver: &SolverConfig,
) -> Vec<Result<PointFit>> {
    let mut warm: Option<DVector<f64>> = None;
    grid.values()
        .iter()
        .map(|&lambda| {
            let spec = PenaltySpec::new(penalty, lambda)?;
            let fit = fit_penalized(train, spec, warm.as_ref(), solver)?;
            warm = Some(fit.b.clone());
            // A single held-out row has zero spread; R² is then undefined
            // while the squared errors remain valid.
            let r2 = |d: &Dataset| metrics::r2(&fit, d).unwrap_or(f64::NAN);
            Ok(PointFit {
                ete: metrics::ete(&fit, train)?,
                ege: metrics::ege(&fit, test)?,
                r2_t: r2(train),
                r2_s: r2(test),
                coefficients: fit,
            })
        })
        .collect()
}

/// Strict improvement only, so on a decreasing grid ties keep the larger λ.
fn argmin(path: &[PathEntry]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, e) in path.iter().enumerate() {
        if e.failed() || !e.ege.is_finite() {
            continue;
        }
        if best.is_none_or(|b| e.ege < path[b].ege) {
            best = Some(i);
        }
    }
    best.ok_or(Error::AllFitsFailed)
}

fn failed_entry(lambda: f64, e: &Error) -> PathEntry {
    PathEntry {
        lambda,
        coefficients: None,
        ete: f64::NAN,
        ege: f64::NAN,
        r2_t: f64::NAN,
        r2_s: f64::NAN,
        error: Some(e.to_string()),
    }
}

pub fn select_validation(
    data: &Dataset,
    penalty: Penalty,
    grid: &LambdaGrid,
    ratio: f64,
    seed: u64,
    opts: &SelectOptions,
) -> Result<SelectionReport> {
    let split = split_validation(data, ratio, seed)?;
    let test = held_out(&split, opts.test_scaling)?;
    let path: Vec<PathEntry> = sweep(&split.train, &test, penalty, grid, &opts.solver)
        .into_iter()
        .zip(grid.values())
        .map(|(r, &lambda)| match r {
            Ok(f) => PathEntry {
                lambda,
                coefficients: Some(f.coefficients),
                ete: f.ete,
                ege: f.ege,
                r2_t: f.r2_t,
                r2_s: f.r2_s,
                error: None,
            },
            Err(e) => {
                log::warn!("fit at lambda {lambda} failed: {e}");
                failed_entry(lambda, &e)
            }
        })
        .collect();
    let best_index = argmin(&path)?;
    let entry = &path[best_index];
    Ok(SelectionReport {
        penalty,
        mode: SelectionMode::Validation { ratio, seed },
        test_scaling: opts.test_scaling,
        best_lambda: entry.lambda,
        best: entry.coefficients.clone().expect("non-failed entry has coefficients"),
        gr2_of_best: entry.r2_s * entry.r2_t,
        best_index,
        n_t: split.train.n(),
        n_s: split.test.n(),
        rounds: Vec::new(),
        path,
    })
}

pub fn select_cv(
    data: &Dataset,
    penalty: Penalty,
    grid: &LambdaGrid,
    k: usize,
    seed: u64,
    opts: &SelectOptions,
) -> Result<SelectionReport> {
    let folds = make_folds(data, k, seed)?;
    let splits: Vec<SplitPair> = (0..k).map(|q| folds.round(data, q)).collect::<Result<_>>()?;
    let per_round: Vec<Vec<Result<PointFit>>> = splits
        .par_iter()
        .map(|s| {
            let test = held_out(s, opts.test_scaling)?;
            Ok(sweep(&s.train, &test, penalty, grid, &opts.solver))
        })
        .collect::<Result<_>>()?;

    let full = data.standardize()?;
    let mut warm: Option<DVector<f64>> = None;
    let kf = k as f64;
    let mut path = Vec::with_capacity(grid.len());
    for (i, &lambda) in grid.values().iter().enumerate() {
        let round_err = per_round.iter().find_map(|r| r[i].as_ref().err());
        if let Some(e) = round_err {
            log::warn!("fit at lambda {lambda} failed in a CV round: {e}");
            path.push(failed_entry(lambda, e));
            continue;
        }
        let refit = PenaltySpec::new(penalty, lambda)
            .and_then(|spec| fit_penalized(&full, spec, warm.as_ref(), &opts.solver));
        let refit = match refit {
            Ok(c) => c,
            Err(e) => {
                log::warn!("full-sample fit at lambda {lambda} failed: {e}");
                path.push(failed_entry(lambda, &e));
                continue;
            }
        };
        warm = Some(refit.b.clone());
        let avg = |f: &dyn Fn(&PointFit) -> f64| {
            per_round
                .iter()
                .map(|r| f(r[i].as_ref().expect("checked above")))
                .sum::<f64>()
                / kf
        };
        path.push(PathEntry {
            lambda,
            coefficients: Some(refit),
            ete: avg(&|p| p.ete),
            ege: avg(&|p| p.ege),
            r2_t: avg(&|p| p.r2_t),
            r2_s: avg(&|p| p.r2_s),
            error: None,
        });
    }
    let best_index = argmin(&path)?;
    let rounds = per_round
        .into_iter()
        .zip(&splits)
        .map(|(mut r, s)| {
            let p = r.swap_remove(best_index).expect("selected entry succeeded in every round");
            RoundFit {
                coefficients: p.coefficients,
                ete: p.ete,
                ege: p.ege,
                n_t: s.train.n(),
                n_s: s.test.n(),
            }
        })
        .collect();
    let entry = &path[best_index];
    Ok(SelectionReport {
        penalty,
        mode: SelectionMode::Cv { k, seed },
        test_scaling: opts.test_scaling,
        best_lambda: entry.lambda,
        best: entry.coefficients.clone().expect("non-failed entry has coefficients"),
        gr2_of_best: entry.r2_s * entry.r2_t,
        best_index,
        n_t: splits[0].train.n(),
        n_s: splits[0].test.n(),
        rounds,
        path,
    })
}

/// Dispatch on [`SelectionMode`].
pub fn select(
    data: &Dataset,
    penalty: Penalty,
    grid: &LambdaGrid,
    mode: SelectionMode,
    opts: &SelectOptions,
) -> Result<SelectionReport> {
    match mode {
        SelectionMode::Validation { ratio, seed } => {
            select_validation(data, penalty, grid, ratio, seed, opts)
        }
        SelectionMode::Cv { k, seed } => select_cv(data, penalty, grid, k, seed, opts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_lambda_max() {
        // (1/n) xᵀy = 0.4 on standardized-scale values.
        let d = Dataset::from_rows(&[0.8, -0.8], &[vec![0.5], vec![-0.5]]).unwrap();
        let g = lambda_grid(&d, 5, 0.01).unwrap();
        assert!((g.lambda_max() - 0.8).abs() < 1e-15);
        assert_eq!(g.len(), 5 + 1);
    }

    #[test]
    fn log_spacing() {
        let d = Dataset::from_rows(&[0.8, -0.8, 0.1, 0.0], &[vec![0.5], vec![-0.5], vec![0.2], vec![0.1]])
            .unwrap();
        let g = lambda_grid(&d, 5, 1e-2).unwrap();
        let v = &g.values()[..5];
        let r0 = v[1] / v[0];
        for w in v.windows(2) {
            assert!((w[1] / w[0] - r0).abs() < 1e-12);
        }
        assert!((v[4] / v[0] - 1e-2).abs() < 1e-12);
        assert_eq!(*g.values().last().unwrap(), 0.0);
    }

    #[test]
    fn orthogonal_outcome_gives_zero_grid() {
        let d = Dataset::from_rows(&[1.0, -1.0, 1.0, -1.0], &[vec![1.0], vec![1.0], vec![-1.0], vec![-1.0]])
            .unwrap();
        let g = lambda_grid(&d, 10, 1e-3).unwrap();
        assert_eq!(g.values(), &[0.0]);
    }

    #[test]
    fn from_values_sorts_and_dedups() {
        let g = LambdaGrid::from_values(vec![0.1, 1.0, 0.1, 0.0]).unwrap();
        assert_eq!(g.values(), &[1.0, 0.1, 0.0]);
        assert!(LambdaGrid::from_values(vec![]).is_err());
        assert!(LambdaGrid::from_values(vec![-1.0]).is_err());
    }
}
