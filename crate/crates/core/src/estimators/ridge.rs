use nalgebra::DMatrix;

use super::{fit_ols, Coefficients};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg;

/// Closed form: `((1/n)XᵀX + λI) b = (1/n)Xᵀy`.
pub fn fit_ridge(train: &Dataset, lambda: f64) -> Result<Coefficients> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::BadPenalty(format!("lambda = {lambda} must be >= 0")));
    }
    if lambda == 0.0 {
        return fit_ols(train);
    }
    let p = train.p();
    let a = linalg::scaled_gram(train.x()) + DMatrix::identity(p, p) * lambda;
    let c = linalg::scaled_xtv(train.x(), train.y());
    let chol = a.cholesky().ok_or(Error::Singular {
        min_eigenvalue: 0.0,
        threshold: 0.0,
    })?;
    Ok(Coefficients {
        b: chol.solve(&c),
        intercept: 0.0,
        solver_iters: 1,
        converged: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_points() -> Dataset {
        Dataset::from_rows(&[1.0, 3.0, 2.0, 6.0], &[vec![1.0], vec![2.0], vec![3.0], vec![4.0]])
            .unwrap()
            .standardize()
            .unwrap()
    }

    #[test]
    fn scalar_closed_form() {
        let d = four_points();
        let xy: f64 = d.x().column(0).dot(d.y()) / 4.0;
        for lambda in [0.1, 1.0, 3.5] {
            let b = fit_ridge(&d, lambda).unwrap();
            assert!((b.b[0] - xy / (1.0 + lambda)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_lambda_is_ols() {
        let d = four_points();
        let r = fit_ridge(&d, 0.0).unwrap();
        let o = fit_ols(&d).unwrap();
        assert!((r.b[0] - o.b[0]).abs() < 1e-10);
    }

    #[test]
    fn heavy_penalty_shrinks() {
        let d = four_points();
        assert!(fit_ridge(&d, 1e6).unwrap().b.norm() < 1e-4);
    }

    #[test]
    fn works_when_p_exceeds_n() {
        let rows: Vec<Vec<f64>> = (0..4).map(|i| (0..6).map(|j| ((i + 1) * (j + 2) % 5) as f64 + 0.1 * j as f64).collect()).collect();
        let d = Dataset::from_rows(&[1.0, 2.0, 0.5, 3.0], &rows).unwrap();
        let b = fit_ridge(&d, 0.5).unwrap();
        assert!(b.b.iter().all(|v| v.is_finite()));
    }
}
