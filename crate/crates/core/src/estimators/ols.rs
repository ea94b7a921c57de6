use nalgebra::{DVector, SymmetricEigen};

use super::Coefficients;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg;

/// Eigenvalues of `(1/n)XᵀX` at or below `1e-10 · trace / p` count as zero.
pub fn ols_singularity_threshold(trace: f64, p: usize) -> f64 {
    1e-10 * trace / p as f64
}

/// Least squares via the eigendecomposition of `(1/n)XᵀX`.
pub fn fit_ols(train: &Dataset) -> Result<Coefficients> {
    let (n, p) = (train.n(), train.p());
    if n <= p {
        return Err(Error::Underdetermined { n, p });
    }
    let gram = linalg::scaled_gram(train.x());
    let threshold = ols_singularity_threshold(gram.trace(), p);
    let eig = SymmetricEigen::new(gram);
    let min_eigenvalue = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min_eigenvalue > threshold) {
        return Err(Error::Singular {
            min_eigenvalue,
            threshold,
        });
    }
    let c = linalg::scaled_xtv(train.x(), train.y());
    let proj = eig.eigenvectors.tr_mul(&c);
    let scaled = DVector::from_fn(p, |k, _| proj[k] / eig.eigenvalues[k]);
    let b = &eig.eigenvectors * scaled;
    Ok(Coefficients {
        b,
        intercept: 0.0,
        solver_iters: 1,
        converged: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_fit() {
        let d = Dataset::from_rows(&[1.0, 2.0, 3.0, 4.0], &[vec![1.0], vec![2.0], vec![3.0], vec![4.0]])
            .unwrap()
            .standardize()
            .unwrap();
        let b = fit_ols(&d).unwrap();
        assert!((b.b[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_normal_equations() {
        // XᵀX = diag(2, 1), Xᵀy = (2, 0)  =>  b = (1, 0)
        let d = Dataset::from_rows(
            &[1.0, -1.0, 0.0],
            &[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0]],
        )
        .unwrap();
        let b = fit_ols(&d).unwrap();
        assert!((b.b[0] - 1.0).abs() < 1e-10);
        assert!(b.b[1].abs() < 1e-10);
    }

    #[test]
    fn residuals_orthogonal() {
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|i| vec![(i as f64).sin(), (i as f64 * 0.7).cos(), i as f64 / 3.0])
            .collect();
        let y: Vec<f64> = (0..12).map(|i| (i as f64 * 1.3).sin() + 0.1 * i as f64).collect();
        let d = Dataset::from_rows(&y, &rows).unwrap().standardize().unwrap();
        let b = fit_ols(&d).unwrap();
        let r = b.residuals(&d).unwrap();
        let xr = d.x().tr_mul(&r);
        assert!(xr.amax() < 1e-8);
    }

    #[test]
    fn underdetermined_and_singular() {
        let rows: Vec<Vec<f64>> = (0..5).map(|i| (0..10).map(|j| ((i * j) % 7) as f64).collect()).collect();
        let d = Dataset::from_rows(&[1.0, 2.0, 0.0, 4.0, 3.0], &rows).unwrap();
        assert_eq!(fit_ols(&d), Err(Error::Underdetermined { n: 5, p: 10 }));

        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let d = Dataset::from_rows(&[1.0, 0.0, 2.0, 5.0, 3.0, 1.0], &rows).unwrap();
        assert!(matches!(fit_ols(&d), Err(Error::Singular { .. })));
    }
}
