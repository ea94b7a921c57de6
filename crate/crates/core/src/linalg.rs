//! Small dense linear-algebra helpers shared by the solvers and bounds.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// `(1/n) XᵀX`.
pub fn scaled_gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let mut g = x.tr_mul(x);
    g /= n;
    g
}

/// `(1/n) Xᵀv`.
pub fn scaled_xtv(x: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    let mut c = x.tr_mul(v);
    c /= n;
    c
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_sym_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Eigenvector for the smallest eigenvalue of a symmetric matrix.
pub fn min_sym_eigenpair(a: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let eig = SymmetricEigen::new(a.clone());
    let (k, val) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    (val, eig.eigenvectors.column(k).into_owned())
}

pub fn l1_norm(v: &DVector<f64>) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn linf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Neumaier-compensated mean.
pub fn compensated_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    (sum + comp) / values.len() as f64
}

/// Sample variance with denominator `n - 1` (zero for a single value).
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = compensated_mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_mean_beats_naive() {
        let mut v = vec![1e16, 1.0, -1e16];
        v.extend(std::iter::repeat(1.0).take(7));
        assert_eq!(compensated_mean(&v), 0.8);
    }

    #[test]
    fn eigen_two_by_two() {
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!((min_sym_eigenvalue(&g) - 1.0).abs() < 1e-12);
        let (val, vec) = min_sym_eigenpair(&g);
        assert!((val - 1.0).abs() < 1e-12);
        assert!((vec[0] + vec[1]).abs() < 1e-12);
    }
}
