//! Distance between the unpenalized fit and the selected penalized fit.
//!
//! With `κ` the curvature of the held-out design, the validation bound is
//!
//! `‖b_ref − b*‖₂ ≤ √(|eTE/(1−√ε) − eGE| / κ) + √(4‖e_sᵀX_s‖∞‖b_ref‖₁ / (κ n_s)) + √(ς/κ)`
//!
//! where the errors and residuals are those of the reference fit and
//! `ς = 2σ⁴/(n_s √(1−ϖ))`. The cross-validated form bounds the K-round mean
//! of `‖b_ref^q − b*^q‖₂²` by the averaged squared terms over `κ* = min_q κ_q`.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::eigen::{min_eigenvalue, restricted_eigenvalue, ReOptions};
use super::{epsilon, gaussian_varsigma, BoundKind, BoundReport};
use crate::data::{make_folds, split_validation, Dataset, SplitPair};
use crate::error::{Error, Result};
use crate::estimators::{fit_fsr, fit_ols, Coefficients, FsrConfig};
use crate::linalg;
use crate::selector::{held_out, SelectionMode, SelectionReport};

/// Curvature below this is treated as zero.
const CURVATURE_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Curvature {
    /// `λ_min(X_sᵀX_s)/n_s`; zero whenever `p ≥ n_s`.
    Ordinary,
    /// Squared restricted eigenvalue of `X_s` over supports of size `s`.
    Restricted { s: usize, k0: f64, opts: ReOptions },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source", content = "value")]
pub enum SigmaSource {
    Supplied(f64),
    /// `‖e_t‖²/(n_t − p)` of the reference fit.
    TrainingResiduals,
    /// `‖e_s‖²/n_s`, used when `n_t ≤ p` leaves no residual degrees of freedom.
    HeldOutResiduals,
}

/// One training/held-out pair with both fits, in matching coordinates.
#[derive(Debug, Clone, Copy)]
pub struct L2DiffPart<'a> {
    pub train: &'a Dataset,
    pub test: &'a Dataset,
    pub reference: &'a Coefficients,
    pub selected: &'a Coefficients,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L2DiffReport {
    /// Validation: bound on `‖b_ref − b*‖₂`. CV: bound on the K-round mean
    /// of its square.
    pub bound: BoundReport,
    /// Bound on the mean squared difference of held-out predictions.
    #[serde(with = "crate::serde_vec::extended_f64")]
    pub predicted_value_bound: f64,
    /// The bounded quantity evaluated on the supplied fits.
    pub observed: f64,
    pub observed_predicted: f64,
    pub curvature: f64,
    pub gap_term: f64,
    pub endogeneity_term: f64,
    pub tail_term: f64,
    pub sigma2: f64,
    pub sigma_source: SigmaSource,
}

struct PartTerms {
    n_t: usize,
    n_s: usize,
    inflated_ete: f64,
    ege: f64,
    /// `(4/n_s)‖e_sᵀX_s‖∞‖b_ref‖₁`.
    endogeneity: f64,
    sigma2: f64,
    sigma_source: SigmaSource,
    epsilon: f64,
    vacuous: bool,
    diff_sq: f64,
    pred_diff: f64,
}

fn part_terms(part: &L2DiffPart, h: usize, sigma2: Option<f64>) -> Result<PartTerms> {
    let e_t = part.reference.residuals(part.train)?;
    let e_s = part.reference.residuals(part.test)?;
    let (n_t, n_s) = (part.train.n(), part.test.n());
    let p = part.train.p();
    let eps = epsilon(n_t, h, 1.0 / n_t as f64)?;
    let ete = e_t.norm_squared() / n_t as f64;
    let ege = e_s.norm_squared() / n_s as f64;
    let (sigma2, sigma_source) = match sigma2 {
        Some(v) => (v, SigmaSource::Supplied(v)),
        None if n_t > p => (e_t.norm_squared() / (n_t - p) as f64, SigmaSource::TrainingResiduals),
        None => (ege, SigmaSource::HeldOutResiduals),
    };
    let xe = part.test.x().tr_mul(&e_s);
    let endogeneity = 4.0 * linalg::linf_norm(&xe) * part.reference.l1_norm() / n_s as f64;
    let diff = &part.reference.b - &part.selected.b;
    let pred = part.test.x() * &diff;
    Ok(PartTerms {
        n_t,
        n_s,
        inflated_ete: if ete == 0.0 { 0.0 } else { ete * eps.inflation() },
        ege,
        endogeneity,
        sigma2,
        sigma_source,
        epsilon: eps.value,
        vacuous: eps.vacuous,
        diff_sq: diff.norm_squared(),
        pred_diff: pred.norm_squared() / n_s as f64,
    })
}

/// Returns the curvature and whether it is numerically zero.
fn curvature_of(x: &nalgebra::DMatrix<f64>, kind: &Curvature) -> Result<(f64, bool)> {
    let n = x.nrows() as f64;
    match kind {
        Curvature::Ordinary => {
            let k = min_eigenvalue(x) / n;
            if k <= CURVATURE_FLOOR {
                return Err(Error::ZeroCurvature(k));
            }
            Ok((k, false))
        }
        Curvature::Restricted { s, k0, opts } => {
            let re = restricted_eigenvalue(x, *s, *k0, opts)?;
            let k = re * re;
            Ok((k, k <= CURVATURE_FLOOR))
        }
    }
}

fn check_sigma(sigma2: Option<f64>) -> Result<()> {
    match sigma2 {
        Some(v) if !(v >= 0.0 && v.is_finite()) => {
            Err(Error::InvalidArgument(format!("sigma2 = {v} must be >= 0")))
        }
        _ => Ok(()),
    }
}

fn check_varpi(varpi: f64) -> Result<()> {
    if !(varpi > 0.0 && varpi < 1.0) {
        return Err(Error::InvalidArgument(format!("varpi = {varpi} outside (0, 1)")));
    }
    Ok(())
}

fn curvature_name(kind: &Curvature) -> &'static str {
    match kind {
        Curvature::Ordinary => "ordinary",
        Curvature::Restricted { .. } => "restricted",
    }
}

pub fn l2_diff_bound_validation(
    part: &L2DiffPart,
    h: usize,
    varpi: f64,
    sigma2: Option<f64>,
    curvature: &Curvature,
) -> Result<L2DiffReport> {
    check_varpi(varpi)?;
    check_sigma(sigma2)?;
    let t = part_terms(part, h, sigma2)?;
    let (kappa, flat) = curvature_of(part.test.x(), curvature)?;
    let varsigma = gaussian_varsigma(t.sigma2, t.n_s as f64, varpi);
    let gap = t.inflated_ete - t.ege;
    let mut flags = Vec::new();
    let bound = if t.vacuous {
        flags.push("vacuous_epsilon".to_string());
        f64::INFINITY
    } else if flat {
        flags.push("zero_curvature".to_string());
        f64::INFINITY
    } else {
        (gap.abs() / kappa).sqrt() + (t.endogeneity / kappa).sqrt() + (varsigma / kappa).sqrt()
    };
    let predicted = if t.vacuous {
        f64::INFINITY
    } else {
        gap + t.endogeneity + varsigma
    };
    Ok(L2DiffReport {
        bound: BoundReport {
            kind: BoundKind::L2DiffValidation,
            bound_value: bound,
            probability_floor: varpi * (1.0 - 1.0 / t.n_t as f64),
            varsigma,
            epsilon: t.epsilon,
            vacuous: bound.is_infinite(),
            regime: Some(curvature_name(curvature).to_string()),
            flags,
            inputs: json!({
                "n_t": t.n_t, "n_s": t.n_s, "h": h, "varpi": varpi,
                "sigma2": t.sigma2, "sigma_source": t.sigma_source,
                "curvature": curvature, "kappa": kappa,
            }),
        },
        predicted_value_bound: predicted,
        observed: t.diff_sq.sqrt(),
        observed_predicted: t.pred_diff,
        curvature: kappa,
        gap_term: gap,
        endogeneity_term: t.endogeneity,
        tail_term: varsigma,
        sigma2: t.sigma2,
        sigma_source: t.sigma_source,
    })
}

/// Cross-validated form over the K rounds in `parts`; `n` is the full
/// sample size.
pub fn l2_diff_bound_cv(
    parts: &[L2DiffPart],
    n: usize,
    h: usize,
    varpi: f64,
    sigma2: Option<f64>,
    curvature: &Curvature,
) -> Result<L2DiffReport> {
    let k = parts.len();
    if k < 2 || k > n {
        return Err(Error::BadK { k, n });
    }
    check_varpi(varpi)?;
    check_sigma(sigma2)?;
    let terms: Vec<PartTerms> = parts
        .iter()
        .map(|p| part_terms(p, h, sigma2))
        .collect::<Result<_>>()?;
    let mut kappa = f64::INFINITY;
    let mut flat = false;
    for p in parts {
        let (kq, fq) = curvature_of(p.test.x(), curvature)?;
        kappa = kappa.min(kq);
        flat |= fq;
    }
    let kf = k as f64;
    let avg = |f: &dyn Fn(&PartTerms) -> f64| terms.iter().map(f).sum::<f64>() / kf;
    let sigma2_used = avg(&|t| t.sigma2);
    let sigma_source = terms[0].sigma_source;
    let varsigma = gaussian_varsigma(sigma2_used, n as f64 / kf, varpi);
    let gap = avg(&|t| t.inflated_ete) - avg(&|t| t.ege);
    let endogeneity = avg(&|t| t.endogeneity);
    let vacuous_eps = terms.iter().any(|t| t.vacuous);
    let mut flags = Vec::new();
    let bound = if vacuous_eps {
        flags.push("vacuous_epsilon".to_string());
        f64::INFINITY
    } else if flat {
        flags.push("zero_curvature".to_string());
        f64::INFINITY
    } else {
        (gap.abs() + endogeneity + varsigma) / kappa
    };
    let predicted = if vacuous_eps {
        f64::INFINITY
    } else {
        gap.abs() + endogeneity + varsigma
    };
    let n_t = terms[0].n_t;
    Ok(L2DiffReport {
        bound: BoundReport {
            kind: BoundKind::L2DiffCrossValidation,
            bound_value: bound,
            probability_floor: varpi * (1.0 - 1.0 / n_t as f64),
            varsigma,
            epsilon: terms[0].epsilon,
            vacuous: bound.is_infinite(),
            regime: Some(curvature_name(curvature).to_string()),
            flags,
            inputs: json!({
                "n": n, "k": k, "n_t": n_t, "h": h, "varpi": varpi,
                "sigma2": sigma2_used, "sigma_source": sigma_source,
                "curvature": curvature, "kappa_min": kappa,
            }),
        },
        predicted_value_bound: predicted,
        observed: avg(&|t| t.diff_sq),
        observed_predicted: avg(&|t| t.pred_diff),
        curvature: kappa,
        gap_term: gap,
        endogeneity_term: endogeneity,
        tail_term: varsigma,
        sigma2: sigma2_used,
        sigma_source,
    })
}

/// Unpenalized reference on a training part: least squares when
/// `n_t > p`, forward stagewise otherwise.
pub(crate) fn reference_fit(train: &Dataset) -> Result<Coefficients> {
    if train.n() > train.p() {
        fit_ols(train)
    } else {
        Ok(fit_fsr(train, &FsrConfig::default_for(train)))
    }
}

/// Rebuild the splits behind `report`, fit the unpenalized reference on each
/// training part and evaluate the matching bound.
pub fn l2_diff_from_report(
    data: &Dataset,
    report: &SelectionReport,
    varpi: f64,
    sigma2: Option<f64>,
    curvature: &Curvature,
) -> Result<L2DiffReport> {
    let h = data.p();
    let splits: Vec<SplitPair> = match report.mode {
        SelectionMode::Validation { ratio, seed } => vec![split_validation(data, ratio, seed)?],
        SelectionMode::Cv { k, seed } => {
            let folds = make_folds(data, k, seed)?;
            (0..k).map(|q| folds.round(data, q)).collect::<Result<_>>()?
        }
    };
    let tests: Vec<Dataset> = splits
        .iter()
        .map(|s| held_out(s, report.test_scaling))
        .collect::<Result<_>>()?;
    let refs: Vec<Coefficients> = splits
        .iter()
        .map(|s| reference_fit(&s.train))
        .collect::<Result<_>>()?;
    match report.mode {
        SelectionMode::Validation { .. } => {
            let part = L2DiffPart {
                train: &splits[0].train,
                test: &tests[0],
                reference: &refs[0],
                selected: &report.best,
            };
            l2_diff_bound_validation(&part, h, varpi, sigma2, curvature)
        }
        SelectionMode::Cv { .. } => {
            let parts: Vec<L2DiffPart> = (0..splits.len())
                .map(|q| L2DiffPart {
                    train: &splits[q].train,
                    test: &tests[q],
                    reference: &refs[q],
                    selected: &report.rounds[q].coefficients,
                })
                .collect();
            l2_diff_bound_cv(&parts, data.n(), h, varpi, sigma2, curvature)
        }
    }
}
