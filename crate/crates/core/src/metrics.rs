//! Error functionals and goodness of fit.
//!
//! All functionals use the `1/n` normalization, so on standardized data the
//! zero model has training error 1 and `R² = 0`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::Coefficients;

/// Mean squared residual, `(1/n)‖y − Xb‖₂²`.
pub fn mean_squared_error(b: &Coefficients, data: &Dataset) -> Result<f64> {
    Ok(b.residuals(data)?.norm_squared() / data.n() as f64)
}

/// Empirical training error.
pub fn ete(b: &Coefficients, train: &Dataset) -> Result<f64> {
    mean_squared_error(b, train)
}

/// Empirical generalization error.
pub fn ege(b: &Coefficients, test: &Dataset) -> Result<f64> {
    mean_squared_error(b, test)
}

/// `Σ(y − ȳ)²/n`.
pub fn tss(data: &Dataset) -> f64 {
    let n = data.n() as f64;
    let mean = data.y().sum() / n;
    data.y().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

pub fn r2(b: &Coefficients, data: &Dataset) -> Result<f64> {
    let t = tss(data);
    if !(t > 0.0) {
        return Err(Error::ZeroTss);
    }
    Ok(1.0 - mean_squared_error(b, data)? / t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitMetrics {
    pub ete: f64,
    pub ege: f64,
    pub r2_t: f64,
    pub r2_s: f64,
    /// Always `r2_s * r2_t`.
    pub gr2: f64,
    pub l2_bias: Option<f64>,
    pub l1_bias: Option<f64>,
}

impl FitMetrics {
    pub fn with_bias(mut self, b: &Coefficients, beta: &DVector<f64>) -> Result<Self> {
        self.l2_bias = Some(l2_bias(b, beta)?);
        self.l1_bias = Some(l1_bias(b, beta)?);
        Ok(self)
    }

    pub const CSV_LABELS: [&'static str; 7] =
        ["Bias", "Bias_l1", "eTE", "eGE", "R2_t", "R2_s", "GR2"];

    /// Values in [`FitMetrics::CSV_LABELS`] order; missing bias prints empty.
    pub fn csv_fields(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        vec![
            opt(self.l2_bias),
            opt(self.l1_bias),
            self.ete.to_string(),
            self.ege.to_string(),
            self.r2_t.to_string(),
            self.r2_s.to_string(),
            self.gr2.to_string(),
        ]
    }
}

/// In-sample and out-of-sample fit of one coefficient vector.
pub fn gr2(b: &Coefficients, train: &Dataset, test: &Dataset) -> Result<FitMetrics> {
    let ete = ete(b, train)?;
    let ege = ege(b, test)?;
    let (tt, ts) = (tss(train), tss(test));
    if !(tt > 0.0 && ts > 0.0) {
        return Err(Error::ZeroTss);
    }
    let r2_t = 1.0 - ete / tt;
    let r2_s = 1.0 - ege / ts;
    Ok(FitMetrics {
        ete,
        ege,
        r2_t,
        r2_s,
        gr2: r2_s * r2_t,
        l2_bias: None,
        l1_bias: None,
    })
}

fn check_len(b: &Coefficients, beta: &DVector<f64>) -> Result<()> {
    if b.p() != beta.len() {
        return Err(Error::DimensionMismatch {
            expected: beta.len(),
            found: b.p(),
        });
    }
    Ok(())
}

/// `‖b − β‖₂`.
pub fn l2_bias(b: &Coefficients, beta: &DVector<f64>) -> Result<f64> {
    check_len(b, beta)?;
    Ok((&b.b - beta).norm())
}

/// `‖b − β‖₁`.
pub fn l1_bias(b: &Coefficients, beta: &DVector<f64>) -> Result<f64> {
    check_len(b, beta)?;
    Ok((&b.b - beta).lp_norm(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_residuals() {
        let d = Dataset::from_rows(&[1.0, -1.0], &[vec![0.0], vec![0.0]]).unwrap();
        assert_eq!(ete(&Coefficients::zeros(1), &d).unwrap(), 1.0);
    }

    #[test]
    fn pythagorean_bias() {
        let b = Coefficients::from_vec(vec![3.0, 4.0, 0.0]);
        let beta = DVector::zeros(3);
        assert_eq!(l2_bias(&b, &beta).unwrap(), 5.0);
        assert_eq!(l1_bias(&b, &beta).unwrap(), 7.0);
        assert!(l2_bias(&b, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn zero_tss() {
        let d = Dataset::from_rows(&[2.0, 2.0], &[vec![1.0], vec![0.0]]).unwrap();
        assert_eq!(r2(&Coefficients::zeros(1), &d), Err(Error::ZeroTss));
    }
}
