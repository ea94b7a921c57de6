//! Curvature of the least-squares objective: the smallest eigenvalue of
//! `XᵀX`, and the restricted eigenvalue over a sparse cone.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;

/// Smallest eigenvalue of `XᵀX`, clamped at zero.
pub fn min_eigenvalue(x: &DMatrix<f64>) -> f64 {
    linalg::min_sym_eigenvalue(&x.tr_mul(x)).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReOptions {
    /// Random cone directions drawn per support.
    pub samples: usize,
    pub seed: u64,
    /// Largest `p` accepted; support enumeration is combinatorial.
    pub cap: usize,
}

impl Default for ReOptions {
    fn default() -> Self {
        Self {
            samples: 10_000,
            seed: 0,
            cap: 20,
        }
    }
}

struct Cone<'a> {
    gram: &'a DMatrix<f64>,
    inside: Vec<usize>,
    outside: Vec<usize>,
    k0: f64,
}

impl Cone<'_> {
    /// `‖XΔ‖₂ / (√n ‖Δ_J‖₂)`.
    fn ratio(&self, d: &DVector<f64>) -> f64 {
        let num = d.dot(&(self.gram * d)).max(0.0).sqrt();
        let den = self.inside.iter().map(|&j| d[j] * d[j]).sum::<f64>().sqrt();
        if den == 0.0 {
            f64::INFINITY
        } else {
            num / den
        }
    }

    /// Shrink the off-support part onto `‖Δ_Jᶜ‖₁ ≤ k₀‖Δ_J‖₁`.
    fn project(&self, d: &mut DVector<f64>) {
        let on: f64 = self.inside.iter().map(|&j| d[j].abs()).sum();
        let off: f64 = self.outside.iter().map(|&j| d[j].abs()).sum();
        let cap = self.k0 * on;
        if off > cap {
            let scale = if off > 0.0 { cap / off } else { 0.0 };
            for &j in &self.outside {
                d[j] *= scale;
            }
        }
    }

    fn sample(&self, r: &mut rng::Rng, p: usize, boundary: bool) -> DVector<f64> {
        let mut d = DVector::zeros(p);
        for &j in &self.inside {
            let v: f64 = r.sample(StandardNormal);
            d[j] = v;
        }
        let on: f64 = self.inside.iter().map(|&j| d[j].abs()).sum();
        if self.outside.is_empty() {
            return d;
        }
        let mut off = 0.0;
        for &j in &self.outside {
            let v: f64 = r.sample(StandardNormal);
            d[j] = v;
            off += v.abs();
        }
        let t = if boundary { 1.0 } else { r.random::<f64>() };
        let scale = if off > 0.0 { t * self.k0 * on / off } else { 0.0 };
        for &j in &self.outside {
            d[j] *= scale;
        }
        d
    }

    /// Coordinate pattern search with projection back into the cone.
    fn refine(&self, mut d: DVector<f64>) -> f64 {
        let mut best = self.ratio(&d);
        let mut step = 0.1 * d.amax().max(1e-12);
        let floor = step * 1e-6;
        while step > floor {
            let mut improved = false;
            for j in 0..d.len() {
                for sign in [1.0, -1.0] {
                    let mut cand = d.clone();
                    cand[j] += sign * step;
                    self.project(&mut cand);
                    let r = self.ratio(&cand);
                    if r < best {
                        best = r;
                        d = cand;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        best
    }
}

fn supports(p: usize, s: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..s).collect();
    loop {
        out.push(cur.clone());
        let Some(i) = (0..s).rev().find(|&i| cur[i] < p - s + i) else {
            return out;
        };
        cur[i] += 1;
        for j in i + 1..s {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Approximate restricted eigenvalue
/// `min_{|J| ≤ s} min_{Δ in cone(J, k₀)} ‖XΔ‖₂ / (√n ‖Δ_J‖₂)`.
///
/// Only supports of size exactly `s` are enumerated: enlarging `J` widens
/// the cone and the denominator, so the minimum is attained there. Within
/// each support the value is the best of the smallest-eigenvector
/// candidates and `samples` random cone directions, followed by a local
/// pattern search. The result therefore bounds the true minimum from above.
pub fn restricted_eigenvalue(x: &DMatrix<f64>, s: usize, k0: f64, opts: &ReOptions) -> Result<f64> {
    let p = x.ncols();
    if s == 0 || s > p {
        return Err(Error::InvalidArgument(format!("support size {s} outside [1, {p}]")));
    }
    if !(k0 >= 0.0 && k0.is_finite()) {
        return Err(Error::InvalidArgument(format!("cone constant k0 = {k0} must be >= 0")));
    }
    if p > opts.cap {
        return Err(Error::TooLarge { p, cap: opts.cap });
    }
    let gram = linalg::scaled_gram(x);
    let (_, full_vec) = linalg::min_sym_eigenpair(&gram);
    let sets = supports(p, s);
    let best = sets
        .par_iter()
        .enumerate()
        .map(|(idx, inside)| {
            let outside: Vec<usize> = (0..p).filter(|j| !inside.contains(j)).collect();
            let cone = Cone {
                gram: &gram,
                inside: inside.clone(),
                outside,
                k0,
            };
            let sub = gram.select_rows(inside).select_columns(inside);
            let (_, sub_vec) = linalg::min_sym_eigenpair(&sub);
            let mut on_support = DVector::zeros(p);
            for (k, &j) in inside.iter().enumerate() {
                on_support[j] = sub_vec[k];
            }
            let mut projected = full_vec.clone();
            cone.project(&mut projected);

            let mut cands = vec![on_support, projected];
            let mut r = rng::seeded(rng::derive_seed(opts.seed, idx as u64));
            let mut best_sample: Option<(f64, DVector<f64>)> = None;
            for i in 0..opts.samples {
                let d = cone.sample(&mut r, p, i % 4 == 0);
                let v = cone.ratio(&d);
                if best_sample.as_ref().is_none_or(|(b, _)| v < *b) {
                    best_sample = Some((v, d));
                }
            }
            cands.extend(best_sample.map(|(_, d)| d));
            cands
                .into_iter()
                .filter(|d| cone.ratio(d).is_finite())
                .map(|d| cone.refine(d))
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| f64::INFINITY, f64::min);
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn support_enumeration() {
        assert_eq!(supports(4, 2).len(), 6);
        assert_eq!(supports(3, 3), vec![vec![0, 1, 2]]);
        assert_eq!(supports(3, 1), vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn rank_deficient_is_zero() {
        let x = DMatrix::from_fn(3, 5, |i, j| ((i + 1) * (j + 2)) as f64 % 4.0);
        assert!(min_eigenvalue(&x) < 1e-8);
    }

    #[test]
    fn too_large() {
        let x = DMatrix::<f64>::identity(30, 25);
        assert_eq!(
            restricted_eigenvalue(&x, 1, 1.0, &ReOptions::default()),
            Err(Error::TooLarge { p: 25, cap: 20 })
        );
    }
}
