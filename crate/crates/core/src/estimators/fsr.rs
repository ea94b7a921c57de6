//! Forward stagewise regression.
//!
//! Each step moves the coefficient of the covariate most correlated with
//! the current residual by a fixed increment in the direction of that
//! correlation. Correlations `c = (1/n)Xᵀr` are updated through Gram
//! columns, `c ← c − δ·(1/n)Xᵀx_j`, which are computed on first use so the
//! cost stays proportional to the number of distinct covariates touched.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::Coefficients;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FsrConfig {
    /// Coefficient increment, standardized units.
    pub step: f64,
    pub max_iters: usize,
    /// Stop once `max_j |(1/n) x_jᵀr|` falls below this.
    pub corr_tol: f64,
}

impl FsrConfig {
    pub fn new(step: f64, max_iters: usize, corr_tol: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidArgument(format!("FSR step {step} must be positive")));
        }
        if !(corr_tol > 0.0 && corr_tol.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "FSR corr_tol {corr_tol} must be positive"
            )));
        }
        if max_iters == 0 {
            return Err(Error::InvalidArgument("FSR max_iters must be >= 1".into()));
        }
        Ok(Self {
            step,
            max_iters,
            corr_tol,
        })
    }

    /// `step = 0.001 · max_j |(1/n) x_jᵀy|`, `corr_tol = 10 · step`,
    /// `max_iters = 10⁶`.
    pub fn default_for(train: &Dataset) -> Self {
        let c = linalg::scaled_xtv(train.x(), train.y());
        let top = linalg::linf_norm(&c);
        let step = if top > 0.0 { 1e-3 * top } else { 1e-3 };
        Self {
            step,
            max_iters: 1_000_000,
            corr_tol: 10.0 * step,
        }
    }
}

fn argmax_abs(c: &DVector<f64>) -> (usize, f64) {
    c.iter()
        .enumerate()
        .fold((0, 0.0), |acc, (j, v)| if v.abs() > acc.1 { (j, v.abs()) } else { acc })
}

/// Never fails: hitting `max_iters` returns the current iterate with
/// `converged = false`.
pub fn fit_fsr(train: &Dataset, cfg: &FsrConfig) -> Coefficients {
    let (n, p) = (train.n() as f64, train.p());
    let x = train.x();
    let mut b = DVector::zeros(p);
    let mut c = linalg::scaled_xtv(x, train.y());
    let mut gram_cols: Vec<Option<DVector<f64>>> = vec![None; p];
    let mut iters = 0usize;
    loop {
        let (j, top) = argmax_abs(&c);
        if top < cfg.corr_tol || top == 0.0 {
            return Coefficients {
                b,
                intercept: 0.0,
                solver_iters: iters,
                converged: true,
            };
        }
        if iters >= cfg.max_iters {
            return Coefficients {
                b,
                intercept: 0.0,
                solver_iters: iters,
                converged: false,
            };
        }
        let delta = cfg.step * c[j].signum();
        b[j] += delta;
        let col = gram_cols[j].get_or_insert_with(|| x.tr_mul(&x.column(j)) / n);
        c.axpy(-delta, col, 1.0);
        iters += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_active_covariate() {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| {
                let t = i as f64;
                vec![t.sin(), (1.7 * t).cos(), (0.3 * t).sin() + 0.2 * t.cos()]
            })
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let d = Dataset::from_rows(&y, &rows).unwrap().standardize().unwrap();
        let cfg = FsrConfig::new(0.01, 100_000, 0.005).unwrap();
        let fit = fit_fsr(&d, &cfg);
        assert_eq!(&fit.b.as_slice()[1..], &[0.0, 0.0]);
        assert!((fit.b[0] - 1.0).abs() <= 0.01 + 1e-12);
    }

    #[test]
    fn zero_iterations() {
        let d = Dataset::from_rows(&[1.0, 2.0, 0.0], &[vec![1.0], vec![2.0], vec![0.5]])
            .unwrap()
            .standardize()
            .unwrap();
        let cfg = FsrConfig {
            step: 0.01,
            max_iters: 0,
            corr_tol: 1e-3,
        };
        let fit = fit_fsr(&d, &cfg);
        assert!(!fit.converged);
        assert_eq!(fit.b[0], 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(FsrConfig::new(0.0, 10, 0.1).is_err());
        assert!(FsrConfig::new(0.1, 0, 0.1).is_err());
        assert!(FsrConfig::new(0.1, 10, -1.0).is_err());
    }
}
