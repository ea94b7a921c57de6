//! Cyclic coordinate descent for `(1/n)‖y − Xb‖₂² + λ‖b‖₁`.
//!
//! Each coordinate update is the exact minimizer along that axis,
//! `b_j = S((1/n)x_jᵀr_j, λ/2) / ((1/n)‖x_j‖²)`, with `r_j` the partial
//! residual and `S` the soft-threshold. Sweeps alternate between the full
//! coordinate set and the current active set. Whenever the sign pattern has
//! changed since the last attempt (checked after each full sweep and
//! periodically during active-set sweeps), the iterate seeds a feature-sign
//! active-set search, which finishes the fit if it reaches a point passing
//! the optimality check. Otherwise a fit is accepted once the largest
//! coefficient change in a full sweep is below `tol` and the subgradient
//! conditions hold to `tol`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Coefficients;
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    pub tol: f64,
    /// Cap on coordinate sweeps (full and active-set sweeps both count).
    pub max_iters: usize,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 100_000,
        }
    }
}

/// Active-set sweeps between refinement attempts; one attempt costs roughly
/// this many sweeps.
const REFINE_PERIOD: usize = 100;

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Smallest λ with an all-zero solution: `max_j |(2/n) x_jᵀy|`.
pub fn lasso_lambda_max(data: &Dataset) -> f64 {
    let n = data.n() as f64;
    data.x()
        .column_iter()
        .map(|c| (2.0 * c.dot(data.y()) / n).abs())
        .fold(0.0, f64::max)
}

/// Largest violation of the lasso subgradient conditions:
/// `|g_j| ≤ λ` where `b_j = 0`, and `g_j = λ·sign(b_j)` otherwise, with
/// `g = (2/n)Xᵀ(y − Xb)`.
pub fn lasso_kkt_violation(b: &DVector<f64>, data: &Dataset, lambda: f64) -> f64 {
    let r = data.y() - data.x() * b;
    kkt_from_residual(data.x(), &r, b, lambda)
}

fn kkt_from_residual(x: &DMatrix<f64>, r: &DVector<f64>, b: &DVector<f64>, lambda: f64) -> f64 {
    let n = x.nrows() as f64;
    let mut worst = 0.0f64;
    for (j, col) in x.column_iter().enumerate() {
        let g = 2.0 * col.dot(r) / n;
        let v = if b[j] == 0.0 {
            (g.abs() - lambda).max(0.0)
        } else {
            (g - lambda * b[j].signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

pub fn fit_lasso(train: &Dataset, lambda: f64, tol: f64, max_iters: usize) -> Result<Coefficients> {
    fit_lasso_from(train, lambda, &LassoConfig { tol, max_iters }, None)
}

struct Workspace<'a> {
    x: &'a DMatrix<f64>,
    col_sq: Vec<f64>,
    r: DVector<f64>,
    b: DVector<f64>,
    half_lambda: f64,
    inv_n: f64,
}

impl Workspace<'_> {
    /// One pass over `coords`; returns the largest absolute change.
    fn sweep(&mut self, coords: impl Iterator<Item = usize>) -> f64 {
        let mut max_change = 0.0f64;
        for j in coords {
            let sq = self.col_sq[j];
            if sq == 0.0 {
                continue;
            }
            let col = self.x.column(j);
            let old = self.b[j];
            let rho = col.dot(&self.r) * self.inv_n + sq * old;
            let new = soft_threshold(rho, self.half_lambda) / sq;
            let delta = new - old;
            if delta != 0.0 {
                self.r.axpy(-delta, &col, 1.0);
                self.b[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        max_change
    }

    fn active(&self) -> Vec<usize> {
        (0..self.b.len()).filter(|&j| self.b[j] != 0.0).collect()
    }
}

/// Columns of `G = XᵀX/n`, computed on first use.
struct GramCache<'a> {
    x: &'a DMatrix<f64>,
    inv_n: f64,
    cols: Vec<Option<DVector<f64>>>,
}

impl<'a> GramCache<'a> {
    fn new(x: &'a DMatrix<f64>) -> Self {
        Self {
            x,
            inv_n: 1.0 / x.nrows() as f64,
            cols: vec![None; x.ncols()],
        }
    }

    fn col(&mut self, j: usize) -> &DVector<f64> {
        let (x, inv_n) = (self.x, self.inv_n);
        self.cols[j].get_or_insert_with(|| x.tr_mul(&x.column(j)) * inv_n)
    }
}

/// Feature-sign search started from `b`: solve the sign-constrained
/// quadratic on the active set, line-search to the best zero crossing,
/// drop coefficients that reach zero, and add the worst subgradient
/// violator once the active set is optimal. Every step strictly lowers the
/// objective. Returns `None` if a step stalls, the active set Gram matrix is
/// singular, or `max_steps` is reached; a returned point passes the full
/// subgradient check at `tol`.
fn refine_active_set(
    train: &Dataset,
    b: &DVector<f64>,
    lambda: f64,
    tol: f64,
    max_steps: usize,
) -> Option<DVector<f64>> {
    let (x, p) = (train.x(), train.p());
    let n = train.n() as f64;
    let c = x.tr_mul(train.y()) / n;
    let mut gram = GramCache::new(x);
    let mut b = b.clone();
    let mut active: Vec<usize> = (0..p).filter(|&j| b[j] != 0.0).collect();
    let mut signs: Vec<f64> = active.iter().map(|&j| b[j].signum()).collect();
    for _ in 0..max_steps {
        // g = 2(c − Gb) = (2/n)Xᵀr
        let mut g = &c * 2.0;
        for &j in &active {
            let bj = b[j];
            g.axpy(-2.0 * bj, gram.col(j), 1.0);
        }
        let on_active = active
            .iter()
            .zip(&signs)
            .map(|(&j, &s)| (g[j] - lambda * s).abs())
            .fold(0.0, f64::max);
        if on_active <= 0.5 * tol {
            let entering = (0..p)
                .filter(|&j| b[j] == 0.0 && !active.contains(&j))
                .map(|j| (j, g[j].abs() - lambda))
                .fold(None, |best: Option<(usize, f64)>, (j, v)| match best {
                    Some((_, bv)) if bv >= v => best,
                    _ => Some((j, v)),
                });
            match entering {
                Some((j, v)) if v > 0.5 * tol => {
                    active.push(j);
                    signs.push(g[j].signum());
                }
                _ => {
                    return (lasso_kkt_violation(&b, train, lambda) <= tol).then_some(b);
                }
            }
        }
        let m = active.len();
        if m >= train.n() {
            return None;
        }
        let mut gaa = DMatrix::zeros(m, m);
        for (k, &j) in active.iter().enumerate() {
            let col = gram.col(j);
            for (l, &i) in active.iter().enumerate() {
                gaa[(l, k)] = col[i];
            }
        }
        let rhs = DVector::from_fn(m, |k, _| c[active[k]] - 0.5 * lambda * signs[k]);
        let target = gaa.clone().cholesky()?.solve(&rhs);
        let d = DVector::from_fn(m, |k, _| target[k] - b[active[k]]);
        // Along b + t·d the loss changes by −t·gᵀd + t²·dᵀG d.
        let slope = -active.iter().zip(d.iter()).map(|(&j, &dj)| g[j] * dj).sum::<f64>();
        let curve = d.dot(&(&gaa * &d));
        let change = |t: f64| {
            let pen: f64 = active
                .iter()
                .zip(d.iter())
                .map(|(&j, &dj)| (b[j] + t * dj).abs() - b[j].abs())
                .sum();
            t * slope + t * t * curve + lambda * pen
        };
        let mut best = (1.0, change(1.0));
        for (k, &j) in active.iter().enumerate() {
            let t = -b[j] / d[k];
            if b[j] != 0.0 && t > 0.0 && t < 1.0 {
                let v = change(t);
                if v < best.1 {
                    best = (t, v);
                }
            }
        }
        let (t, v) = best;
        if !(v < 0.0) {
            return None;
        }
        for (k, &j) in active.iter().enumerate() {
            let crossed = t < 1.0 && b[j] != 0.0 && -b[j] / d[k] == t;
            b[j] = if crossed { 0.0 } else { b[j] + t * d[k] };
        }
        let kept: Vec<usize> = active.iter().copied().filter(|&j| b[j] != 0.0).collect();
        signs = kept.iter().map(|&j| b[j].signum()).collect();
        active = kept;
    }
    None
}

pub fn fit_lasso_from(
    train: &Dataset,
    lambda: f64,
    cfg: &LassoConfig,
    init: Option<&DVector<f64>>,
) -> Result<Coefficients> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::BadPenalty(format!("lambda = {lambda} must be >= 0")));
    }
    if !(cfg.tol > 0.0) {
        return Err(Error::InvalidArgument("lasso tol must be positive".into()));
    }
    let (n, p) = (train.n(), train.p());
    let x = train.x();
    if let Some(b0) = init.filter(|b0| b0.len() != p) {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: b0.len(),
        });
    }
    // Same arithmetic as `lasso_lambda_max`, so the threshold is exact.
    if lambda >= lasso_lambda_max(train) {
        return Ok(Coefficients::zeros(p));
    }
    let b = init.cloned().unwrap_or_else(|| DVector::zeros(p));
    let r = train.y() - x * &b;
    let inv_n = 1.0 / n as f64;
    let col_sq = x.column_iter().map(|c| c.norm_squared() * inv_n).collect();
    let mut ws = Workspace {
        x,
        col_sq,
        r,
        b,
        half_lambda: 0.5 * lambda,
        inv_n,
    };

    let mut iters = 0usize;
    let mut tried: Vec<(usize, bool)> = Vec::new();
    let mut try_refine = |ws: &Workspace| -> Option<DVector<f64>> {
        let pattern: Vec<(usize, bool)> = ws.active().into_iter().map(|j| (j, ws.b[j] > 0.0)).collect();
        if pattern.len() >= n || pattern == tried {
            return None;
        }
        tried = pattern;
        refine_active_set(train, &ws.b, lambda, cfg.tol, 2 * p)
    };
    let done = |b: DVector<f64>, iters: usize| Coefficients {
        b,
        intercept: 0.0,
        solver_iters: iters,
        converged: true,
    };
    while iters < cfg.max_iters {
        let change = ws.sweep(0..p);
        iters += 1;
        if change < cfg.tol {
            // Refresh the residual before certifying optimality.
            ws.r = train.y() - x * &ws.b;
            if kkt_from_residual(x, &ws.r, &ws.b, lambda) <= cfg.tol {
                return Ok(done(ws.b, iters));
            }
        }
        if let Some(b) = try_refine(&ws) {
            return Ok(done(b, iters));
        }
        if change < cfg.tol {
            continue;
        }
        let active = ws.active();
        let mut since_refine = 0usize;
        while iters < cfg.max_iters {
            let change = ws.sweep(active.iter().copied());
            iters += 1;
            if change < cfg.tol {
                break;
            }
            since_refine += 1;
            if since_refine == REFINE_PERIOD {
                since_refine = 0;
                if let Some(b) = try_refine(&ws) {
                    return Ok(done(b, iters));
                }
            }
        }
    }
    Err(Error::NoConvergence { iters })
}
