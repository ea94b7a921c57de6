//! Penalized and unpenalized least-squares estimators.
//!
//! Every penalized fit minimizes `(1/n)‖y − Xb‖₂² + λ‖b‖_γ^γ` on a
//! standardized dataset: lasso (γ = 1), ridge (γ = 2) and bridge (γ > 1).
//! OLS and forward stagewise regression are the unpenalized baselines for
//! `n > p` and `n ≤ p` respectively.

mod bridge;
mod fsr;
mod lasso;
mod ols;
mod ridge;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg;

pub use bridge::{fit_bridge, fit_bridge_from, BridgeConfig};
pub use fsr::{fit_fsr, FsrConfig};
pub use lasso::{fit_lasso, fit_lasso_from, lasso_kkt_violation, lasso_lambda_max, LassoConfig};
pub use ols::{fit_ols, ols_singularity_threshold};
pub use ridge::fit_ridge;

/// Penalty family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family", content = "gamma")]
pub enum Penalty {
    Lasso,
    Ridge,
    Bridge(f64),
}

impl Penalty {
    pub fn from_gamma(gamma: f64) -> Result<Self> {
        if !gamma.is_finite() || gamma < 1.0 {
            return Err(Error::BadPenalty(format!(
                "gamma = {gamma} is not supported (need gamma >= 1)"
            )));
        }
        Ok(if gamma == 1.0 {
            Penalty::Lasso
        } else if gamma == 2.0 {
            Penalty::Ridge
        } else {
            Penalty::Bridge(gamma)
        })
    }

    pub fn gamma(&self) -> f64 {
        match *self {
            Penalty::Lasso => 1.0,
            Penalty::Ridge => 2.0,
            Penalty::Bridge(g) => g,
        }
    }

    pub fn name(&self) -> String {
        match *self {
            Penalty::Lasso => "lasso".into(),
            Penalty::Ridge => "ridge".into(),
            Penalty::Bridge(g) => format!("bridge({g})"),
        }
    }

    /// `Σ |b_j|^γ`.
    pub fn value(&self, b: &DVector<f64>) -> f64 {
        match *self {
            Penalty::Lasso => linalg::l1_norm(b),
            Penalty::Ridge => b.norm_squared(),
            Penalty::Bridge(g) => b.iter().map(|v| v.abs().powf(g)).sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub penalty: Penalty,
    pub lambda: f64,
}

impl PenaltySpec {
    pub fn new(penalty: Penalty, lambda: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::BadPenalty(format!("lambda = {lambda} must be >= 0")));
        }
        Penalty::from_gamma(penalty.gamma())?;
        Ok(Self { penalty, lambda })
    }
}

/// Fitted coefficients. On standardized data the intercept is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    #[serde(with = "crate::serde_vec")]
    pub b: DVector<f64>,
    pub intercept: f64,
    pub solver_iters: usize,
    pub converged: bool,
}

impl Coefficients {
    pub fn zeros(p: usize) -> Self {
        Self {
            b: DVector::zeros(p),
            intercept: 0.0,
            solver_iters: 0,
            converged: true,
        }
    }

    pub fn from_vec(b: Vec<f64>) -> Self {
        Self {
            b: DVector::from_vec(b),
            intercept: 0.0,
            solver_iters: 0,
            converged: true,
        }
    }

    pub fn p(&self) -> usize {
        self.b.len()
    }

    pub fn l1_norm(&self) -> f64 {
        linalg::l1_norm(&self.b)
    }

    pub fn nnz(&self) -> usize {
        self.b.iter().filter(|v| **v != 0.0).count()
    }

    pub fn residuals(&self, data: &Dataset) -> Result<DVector<f64>> {
        if data.p() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: data.p(),
                found: self.p(),
            });
        }
        let mut r = data.y() - data.x() * &self.b;
        r.add_scalar_mut(-self.intercept);
        Ok(r)
    }

    /// Map coefficients fitted on `fitted_on` back to original units.
    pub fn to_original_units(&self, fitted_on: &Dataset) -> Result<Coefficients> {
        if fitted_on.p() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: fitted_on.p(),
                found: self.p(),
            });
        }
        let means = fitted_on.col_means();
        let scales = fitted_on.col_scales();
        let b = DVector::from_fn(self.p(), |j, _| self.b[j] * scales[0] / scales[j + 1]);
        let shift: f64 = (0..self.p()).map(|j| b[j] * means[j + 1]).sum();
        Ok(Coefficients {
            b,
            intercept: means[0] + scales[0] * self.intercept - shift,
            solver_iters: self.solver_iters,
            converged: self.converged,
        })
    }
}

/// Solver tolerances shared by the path-following code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub lasso: LassoConfig,
    pub bridge: BridgeConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lasso: LassoConfig::default(),
            bridge: BridgeConfig::default(),
        }
    }
}

/// Fit one penalized model, optionally warm-started.
///
/// At `λ = 0` every family reduces to OLS, which is solved directly and
/// fails with `Underdetermined` when `n ≤ p`.
pub fn fit_penalized(
    train: &Dataset,
    spec: PenaltySpec,
    warm: Option<&DVector<f64>>,
    cfg: &SolverConfig,
) -> Result<Coefficients> {
    if spec.lambda == 0.0 {
        // Without a penalty and with n ≤ p the minimizer is not unique.
        return fit_ols(train);
    }
    match spec.penalty {
        Penalty::Lasso => fit_lasso_from(train, spec.lambda, &cfg.lasso, warm),
        Penalty::Ridge => fit_ridge(train, spec.lambda),
        Penalty::Bridge(g) => fit_bridge_from(train, spec.lambda, g, &cfg.bridge, warm),
    }
}

/// `(1/n)‖y − Xb‖₂² + λ Σ |b_j|^γ`.
pub fn penalized_objective(b: &Coefficients, data: &Dataset, spec: PenaltySpec) -> Result<f64> {
    let r = b.residuals(data)?;
    let loss = r.norm_squared() / data.n() as f64;
    if spec.lambda == 0.0 {
        return Ok(loss);
    }
    Ok(loss + spec.lambda * spec.penalty.value(&b.b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn objective_hand_case() {
        let d = Dataset::from_rows(&[1.0, -1.0], &[vec![1.0], vec![-1.0]]).unwrap();
        let b = Coefficients::from_vec(vec![0.5]);
        let spec = PenaltySpec::new(Penalty::Lasso, 1.0).unwrap();
        assert!((penalized_objective(&b, &d, spec).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn objective_dimension_mismatch() {
        let d = Dataset::from_rows(&[1.0, -1.0], &[vec![1.0], vec![-1.0]]).unwrap();
        let b = Coefficients::from_vec(vec![0.5, 0.1]);
        let spec = PenaltySpec::new(Penalty::Ridge, 1.0).unwrap();
        assert!(matches!(
            penalized_objective(&b, &d, spec),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gamma_mapping() {
        assert_eq!(Penalty::from_gamma(1.0).unwrap(), Penalty::Lasso);
        assert_eq!(Penalty::from_gamma(2.0).unwrap(), Penalty::Ridge);
        assert_eq!(Penalty::from_gamma(1.5).unwrap(), Penalty::Bridge(1.5));
        assert!(Penalty::from_gamma(0.5).is_err());
        assert!(PenaltySpec::new(Penalty::Lasso, -1.0).is_err());
    }

    #[test]
    fn original_units_roundtrip_predictions() {
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|i| vec![i as f64 * 2.0 + 1.0, ((i * 3) % 5) as f64])
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| 3.0 + 0.5 * r[0] - 2.0 * r[1]).collect();
        let raw = Dataset::from_rows(&y, &rows).unwrap();
        let s = raw.standardize().unwrap();
        let fit = fit_ols(&s).unwrap();
        let orig = fit.to_original_units(&s).unwrap();
        assert!((orig.b[0] - 0.5).abs() < 1e-9);
        assert!((orig.b[1] + 2.0).abs() < 1e-9);
        assert!((orig.intercept - 3.0).abs() < 1e-9);
    }
}
