//! Finite-sample bounds on the empirical generalization error.
//!
//! Every bound is a diagnostic: vacuous configurations (`√ε ≥ 1`, zero
//! curvature, `ϖ = 1`) produce `+∞` with a flag instead of an error.

mod eigen;
mod l2_diff;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::linalg;

pub use eigen::{min_eigenvalue, restricted_eigenvalue, ReOptions};
pub use l2_diff::{
    l2_diff_bound_cv, l2_diff_bound_validation, l2_diff_from_report, Curvature, L2DiffPart,
    L2DiffReport, SigmaSource,
};

/// Slack of the VC inequality, `ε = (1/n_t)[h ln(n_t/h) + h − ln η]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Epsilon {
    pub value: f64,
    /// `√ε ≥ 1`: every bound built on this ε is infinite.
    pub vacuous: bool,
}

impl Epsilon {
    /// `1/(1 − √ε)`, infinite when vacuous.
    pub fn inflation(&self) -> f64 {
        if self.vacuous {
            f64::INFINITY
        } else {
            1.0 / (1.0 - self.value.sqrt())
        }
    }
}

/// `n_t` may be fractional (the CV training size `n(K−1)/K`).
pub fn epsilon_real(n_t: f64, h: usize, eta: f64) -> Result<Epsilon> {
    if !(n_t >= 1.0) || h == 0 {
        return Err(Error::InvalidArgument(format!(
            "epsilon needs n_t >= 1 and h >= 1 (n_t = {n_t}, h = {h})"
        )));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidArgument(format!("eta = {eta} outside (0, 1)")));
    }
    let h = h as f64;
    let value = (h * (n_t / h).ln() + h - eta.ln()) / n_t;
    Ok(Epsilon {
        value,
        vacuous: !(value < 1.0),
    })
}

pub fn epsilon(n_t: usize, h: usize, eta: f64) -> Result<Epsilon> {
    epsilon_real(n_t as f64, h, eta)
}

/// Tail behaviour of the loss `Q = (y − xᵀb)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "regime")]
pub enum TailRegime {
    /// `0 < Q ≤ b`.
    Bounded { b: f64 },
    /// Finite moments beyond the second (`ν > 2`).
    Light { nu: f64, var_q: f64 },
    /// Finite moment of order `ν ∈ (1, 2]`, with `τ` bounding the ratio of
    /// the `ν`-norm to the mean.
    Heavy { nu: f64, tau: f64, mean_q: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailSource {
    UserSupplied,
    PlugIn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailSpec {
    pub regime: TailRegime,
    pub source: TailSource,
}

impl TailSpec {
    pub fn bounded(b: f64) -> Self {
        Self::user(TailRegime::Bounded { b })
    }

    pub fn light(nu: f64, var_q: f64) -> Self {
        Self::user(TailRegime::Light { nu, var_q })
    }

    pub fn heavy(nu: f64, tau: f64, mean_q: f64) -> Self {
        Self::user(TailRegime::Heavy { nu, tau, mean_q })
    }

    fn user(regime: TailRegime) -> Self {
        Self {
            regime,
            source: TailSource::UserSupplied,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.regime {
            TailRegime::Bounded { .. } => "bounded",
            TailRegime::Light { .. } => "light",
            TailRegime::Heavy { .. } => "heavy",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::BadTail(m));
        match self.regime {
            TailRegime::Bounded { b } if !(b > 0.0 && b.is_finite()) => {
                bad(format!("bounded tail needs B > 0, got {b}"))
            }
            TailRegime::Light { nu, .. } if !(nu > 2.0) => {
                bad(format!("light tail needs nu > 2, got {nu}"))
            }
            TailRegime::Light { var_q, .. } if !(var_q >= 0.0 && var_q.is_finite()) => {
                bad(format!("light tail needs var(Q) >= 0, got {var_q}"))
            }
            TailRegime::Heavy { nu, .. } if !(nu > 1.0 && nu <= 2.0) => {
                bad(format!("heavy tail needs 1 < nu <= 2, got {nu}"))
            }
            TailRegime::Heavy { tau, .. } if !(tau >= 1.0 && tau.is_finite()) => {
                bad(format!("heavy tail needs tau >= 1, got {tau}"))
            }
            TailRegime::Heavy { mean_q, .. } if !(mean_q > 0.0 && mean_q.is_finite()) => {
                bad(format!("heavy tail needs E[Q] > 0, got {mean_q}"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub n_t: usize,
    pub n_s: usize,
    /// VC dimension; `p` for linear regression.
    pub h: usize,
    pub eta: f64,
    pub varpi: f64,
    pub tail: TailSpec,
    pub ete: f64,
}

impl BoundInputs {
    fn check(&self) -> Result<()> {
        if self.n_t == 0 || self.n_s == 0 {
            return Err(Error::InvalidArgument("n_t and n_s must be positive".into()));
        }
        check_varpi(self.varpi)?;
        if !(self.ete >= 0.0 && self.ete.is_finite()) {
            return Err(Error::InvalidArgument(format!("eTE = {} must be >= 0", self.ete)));
        }
        self.tail.validate()
    }
}

/// `ϖ = 1` is accepted and makes ς infinite.
fn check_varpi(varpi: f64) -> Result<()> {
    if !(varpi > 0.0 && varpi <= 1.0) {
        return Err(Error::InvalidArgument(format!("varpi = {varpi} outside (0, 1)")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    VcPopulation,
    Validation,
    CrossValidation,
    OlsValidation,
    OlsCrossValidation,
    L2DiffValidation,
    L2DiffCrossValidation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    #[serde(with = "crate::serde_vec::extended_f64")]
    pub bound_value: f64,
    pub probability_floor: f64,
    #[serde(with = "crate::serde_vec::extended_f64")]
    pub varsigma: f64,
    pub epsilon: f64,
    pub vacuous: bool,
    pub regime: Option<String>,
    pub flags: Vec<String>,
    /// Every input used, echoed for audit.
    pub inputs: serde_json::Value,
}

impl BoundReport {
    pub const CSV_HEADER: &'static str =
        "kind,bound_value,probability_floor,varsigma,epsilon,vacuous,regime,flags";

    pub fn csv_row(&self) -> String {
        let kind = serde_json::to_value(self.kind)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            kind,
            self.bound_value,
            self.probability_floor,
            self.varsigma,
            self.epsilon,
            self.vacuous,
            self.regime.as_deref().unwrap_or(""),
            self.flags.join(";")
        )
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }
}

/// `eTE / (1 − √ε)`; zero training error stays zero even when vacuous.
fn inflate(ete: f64, eps: &Epsilon) -> f64 {
    if ete == 0.0 {
        0.0
    } else {
        ete * eps.inflation()
    }
}

/// Upper bound on the population error: `eTE/(1 − √ε)` with probability
/// at least `1 − η`.
pub fn vc_population_bound(inputs: &BoundInputs) -> Result<BoundReport> {
    inputs.check()?;
    let eps = epsilon(inputs.n_t, inputs.h, inputs.eta)?;
    let mut flags = Vec::new();
    if eps.vacuous {
        flags.push("vacuous_epsilon".to_string());
    }
    Ok(BoundReport {
        kind: BoundKind::VcPopulation,
        bound_value: inflate(inputs.ete, &eps),
        probability_floor: 1.0 - inputs.eta,
        varsigma: 0.0,
        epsilon: eps.value,
        vacuous: eps.vacuous,
        regime: None,
        flags,
        inputs: json!(inputs),
    })
}

/// Tail slack for a single held-out set of size `n_s`.
pub fn varsigma_validation(tail: &TailSpec, n_s: usize, varpi: f64) -> Result<f64> {
    tail.validate()?;
    check_varpi(varpi)?;
    if n_s == 0 {
        return Err(Error::InvalidArgument("n_s must be positive".into()));
    }
    let ns = n_s as f64;
    let q = 1.0 - varpi;
    Ok(match tail.regime {
        TailRegime::Bounded { b } => b * (2.0 / q).sqrt().ln() / ns,
        TailRegime::Light { var_q, .. } => {
            if var_q == 0.0 {
                0.0
            } else {
                var_q / (ns * q)
            }
        }
        TailRegime::Heavy { nu, tau, mean_q } => {
            2f64.powf(1.0 / nu) * tau * mean_q / (ns.powf(1.0 - 1.0 / nu) * q.powf(1.0 / nu))
        }
    })
}

/// `eTE/(1 − √ε) + ς` with `η = 1/n_t`; holds with probability at least
/// `ϖ(1 − 1/n_t)`. The `eta` field of `inputs` is ignored.
pub fn ege_bound_validation(inputs: &BoundInputs) -> Result<BoundReport> {
    inputs.check()?;
    let nt = inputs.n_t as f64;
    let eps = epsilon(inputs.n_t, inputs.h, 1.0 / nt)?;
    let varsigma = varsigma_validation(&inputs.tail, inputs.n_s, inputs.varpi)?;
    let mut flags = Vec::new();
    if eps.vacuous {
        flags.push("vacuous_epsilon".to_string());
    }
    if varsigma.is_infinite() {
        flags.push("infinite_varsigma".to_string());
    }
    let bound = inflate(inputs.ete, &eps) + varsigma;
    Ok(BoundReport {
        kind: BoundKind::Validation,
        bound_value: bound,
        probability_floor: inputs.varpi * (1.0 - 1.0 / nt),
        varsigma,
        epsilon: eps.value,
        vacuous: bound.is_infinite(),
        regime: Some(inputs.tail.name().to_string()),
        flags,
        inputs: json!({ "inputs": inputs, "eta_used": 1.0 / nt }),
    })
}

/// Moments of the per-round eGE gaps `T_q = eGE_q − eTE_q/(1 − √ε)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapStats {
    pub mean: f64,
    pub var: f64,
    /// Bernstein moment constant.
    pub bernstein_b: f64,
}

impl GapStats {
    /// Sample mean and variance of the gaps; `bernstein_b` defaults to the
    /// largest absolute deviation from the mean.
    pub fn from_gaps(gaps: &[f64]) -> Result<Self> {
        if gaps.is_empty() {
            return Err(Error::EmptyLosses);
        }
        if gaps.len() < 5 {
            log::warn!("gap moments estimated from only {} rounds", gaps.len());
        }
        let mean = linalg::compensated_mean(gaps);
        let var = linalg::sample_variance(gaps);
        let bernstein_b = gaps.iter().fold(0.0f64, |m, g| m.max((g - mean).abs()));
        Ok(Self {
            mean,
            var,
            bernstein_b,
        })
    }
}

/// `T_q` for each round from its training error, held-out error and
/// training size, with `η = 1/n_t`.
pub fn cv_gaps(rounds: &[(f64, f64, usize)], h: usize) -> Result<Vec<f64>> {
    rounds
        .iter()
        .map(|&(ete, ege, n_t)| {
            let eps = epsilon(n_t, h, 1.0 / n_t as f64)?;
            Ok(ege - inflate(ete, &eps))
        })
        .collect()
}

/// K-fold bound `avg eTE/(1 − √ε) + ς`. Light tails use the Bernstein
/// case, heavy tails the sub-exponential case; bounded tails are rejected.
/// `inputs.ete` is the K-round average training error and `inputs.n_t` the
/// round training size.
pub fn ege_bound_cv(inputs: &BoundInputs, n: usize, k: usize, gaps: &GapStats) -> Result<BoundReport> {
    inputs.check()?;
    if k < 2 || k > n {
        return Err(Error::BadK { k, n });
    }
    if !(gaps.mean.is_finite() && gaps.var.is_finite() && gaps.bernstein_b.is_finite()) {
        return Err(Error::InvalidArgument("gap statistics must be finite".into()));
    }
    let nt = inputs.n_t as f64;
    let (nf, kf) = (n as f64, k as f64);
    let eps = epsilon(inputs.n_t, inputs.h, 1.0 / nt)?;
    let q = 1.0 - inputs.varpi;
    let mut flags = Vec::new();
    let (varsigma, alpha) = match inputs.tail.regime {
        TailRegime::Bounded { .. } => {
            return Err(Error::BadTail(
                "cross-validation bound needs a light or heavy tail".into(),
            ))
        }
        TailRegime::Light { var_q, .. } => {
            let varsigma = if var_q == 0.0 { 0.0 } else { var_q / (q * nf / kf) };
            let d = varsigma - gaps.mean;
            let alpha = if d <= 0.0 {
                flags.push("varsigma_not_above_mean_gap".to_string());
                0.0
            } else {
                let denom = gaps.var / kf + gaps.bernstein_b * d / (3.0 * kf);
                if denom == 0.0 {
                    1.0
                } else {
                    1.0 - 2.0 * (-0.5 * d * d / denom).exp()
                }
            };
            (varsigma, alpha)
        }
        TailRegime::Heavy { nu, tau, mean_q } => {
            let varsigma = 2f64.powf(1.0 / nu) * tau * mean_q
                / (q.powf(1.0 / nu) * (nf / kf).powf(1.0 - 1.0 / nu));
            let alpha = 1.0
                - 2.0 * tau.powf(nu) * mean_q.powf(nu) / (varsigma.powf(nu) * nf.powf(nu))
                - kf / nt;
            (varsigma, alpha)
        }
    };
    if !(alpha > 0.0) {
        flags.push("non_positive_alpha".to_string());
    }
    if eps.vacuous {
        flags.push("vacuous_epsilon".to_string());
    }
    let bound = inflate(inputs.ete, &eps) + varsigma;
    Ok(BoundReport {
        kind: BoundKind::CrossValidation,
        bound_value: bound,
        probability_floor: if alpha.is_nan() { 0.0 } else { alpha.clamp(0.0, 1.0) },
        varsigma,
        epsilon: eps.value,
        vacuous: bound.is_infinite(),
        regime: Some(inputs.tail.name().to_string()),
        flags,
        inputs: json!({ "inputs": inputs, "n": n, "k": k, "gaps": gaps, "alpha_raw": alpha }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum OlsBoundMode {
    Validation,
    /// `ete` is then the K-round average training error.
    Cv { n: usize, k: usize },
}

/// Gaussian-noise tail slack `2σ⁴/(n_s √(1 − ϖ))`.
pub fn gaussian_varsigma(sigma2: f64, n_s: f64, varpi: f64) -> f64 {
    if sigma2 == 0.0 {
        0.0
    } else {
        2.0 * sigma2 * sigma2 / (n_s * (1.0 - varpi).sqrt())
    }
}

/// Least-squares eGE bound under Gaussian noise:
/// `eTE/(1 − √ε) + 2σ⁴/(n_s √(1 − ϖ))`, with `n_s = n/K` under CV.
pub fn ols_ege_bound(
    ete: f64,
    n_t: usize,
    n_s: usize,
    h: usize,
    varpi: f64,
    sigma2: f64,
    mode: OlsBoundMode,
) -> Result<BoundReport> {
    check_varpi(varpi)?;
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma2 = {sigma2} must be >= 0")));
    }
    if !(ete >= 0.0 && ete.is_finite()) {
        return Err(Error::InvalidArgument(format!("eTE = {ete} must be >= 0")));
    }
    if n_t == 0 || n_s == 0 {
        return Err(Error::InvalidArgument("n_t and n_s must be positive".into()));
    }
    let nt = n_t as f64;
    let eps = epsilon(n_t, h, 1.0 / nt)?;
    let (kind, ns) = match mode {
        OlsBoundMode::Validation => (BoundKind::OlsValidation, n_s as f64),
        OlsBoundMode::Cv { n, k } => {
            if k < 2 || k > n {
                return Err(Error::BadK { k, n });
            }
            (BoundKind::OlsCrossValidation, n as f64 / k as f64)
        }
    };
    let varsigma = gaussian_varsigma(sigma2, ns, varpi);
    let bound = inflate(ete, &eps) + varsigma;
    let mut flags = Vec::new();
    if eps.vacuous {
        flags.push("vacuous_epsilon".to_string());
    }
    Ok(BoundReport {
        kind,
        bound_value: bound,
        probability_floor: varpi * (1.0 - 1.0 / nt),
        varsigma,
        epsilon: eps.value,
        vacuous: bound.is_infinite(),
        regime: Some("gaussian".to_string()),
        flags,
        inputs: json!({
            "ete": ete, "n_t": n_t, "n_s": n_s, "h": h, "varpi": varpi,
            "sigma2": sigma2, "mode": mode, "eta_used": 1.0 / nt,
        }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KPoint {
    pub k: usize,
    /// `n(K−1)/K`.
    pub n_t: f64,
    pub epsilon: f64,
    #[serde(with = "crate::serde_vec::extended_f64")]
    pub bias_term: f64,
    pub variance_term: f64,
    #[serde(with = "crate::serde_vec::extended_f64")]
    pub objective: f64,
    pub vacuous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalK {
    pub k_star: usize,
    pub curve: Vec<KPoint>,
}

/// Number of folds minimizing `σ²/(1 − √ε) + 2σ⁴/((n/K)√(1 − ϖ))`, where ε
/// uses `n_t = n(K−1)/K` and `η = 1/n_t`. Ties go to the smaller K.
pub fn optimal_k(
    n: usize,
    h: usize,
    sigma2: f64,
    varpi: f64,
    k_range: std::ops::RangeInclusive<usize>,
) -> Result<OptimalK> {
    let (lo, hi) = (*k_range.start(), *k_range.end());
    if lo < 2 || hi > n || lo > hi {
        return Err(Error::BadK { k: if lo < 2 { lo } else { hi }, n });
    }
    check_varpi(varpi)?;
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma2 = {sigma2} must be > 0")));
    }
    let nf = n as f64;
    let mut curve = Vec::with_capacity(hi - lo + 1);
    for k in k_range {
        let kf = k as f64;
        let n_t = nf * (kf - 1.0) / kf;
        let eps = epsilon_real(n_t, h, 1.0 / n_t)?;
        let bias_term = sigma2 * eps.inflation();
        let variance_term = 2.0 * sigma2 * sigma2 / ((nf / kf) * (1.0 - varpi).sqrt());
        curve.push(KPoint {
            k,
            n_t,
            epsilon: eps.value,
            bias_term,
            variance_term,
            objective: bias_term + variance_term,
            vacuous: eps.vacuous,
        });
    }
    let mut best: Option<&KPoint> = None;
    for pt in curve.iter().filter(|p| !p.vacuous) {
        if best.is_none_or(|b| pt.objective < b.objective) {
            best = Some(pt);
        }
    }
    let k_star = best.ok_or(Error::AllVacuous)?.k;
    Ok(OptimalK { k_star, curve })
}

/// Plug-in tail description from observed losses. `ν > 2` gives a light
/// tail with the sample variance; `1 < ν ≤ 2` a heavy tail with
/// `τ̂ = (mean Q^ν)^{1/ν} / mean Q`.
pub fn estimate_tail(losses: &[f64], nu: f64) -> Result<TailSpec> {
    if losses.is_empty() {
        return Err(Error::EmptyLosses);
    }
    if losses.iter().any(|q| !q.is_finite() || *q < 0.0) {
        return Err(Error::InvalidArgument("losses must be finite and >= 0".into()));
    }
    let regime = if nu > 2.0 {
        if losses.len() == 1 {
            log::warn!("tail variance estimated from a single loss");
        }
        TailRegime::Light {
            nu,
            var_q: linalg::sample_variance(losses),
        }
    } else if nu > 1.0 {
        let mean_q = linalg::compensated_mean(losses);
        if !(mean_q > 0.0) {
            return Err(Error::BadTail("heavy tail needs a positive mean loss".into()));
        }
        let moment: Vec<f64> = losses.iter().map(|q| q.powf(nu)).collect();
        let norm = linalg::compensated_mean(&moment).powf(1.0 / nu);
        // Power-mean inequality gives τ̂ ≥ 1; clamp rounding below it.
        let tau = (norm / mean_q).max(1.0);
        TailRegime::Heavy { nu, tau, mean_q }
    } else {
        return Err(Error::BadTail(format!("nu = {nu} must exceed 1")));
    };
    Ok(TailSpec {
        regime,
        source: TailSource::PlugIn,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn light(varq: f64) -> TailSpec {
        TailSpec::light(3.0, varq)
    }

    #[test]
    fn vacuous_at_h_equals_n() {
        let e = epsilon(50, 50, 0.5).unwrap();
        assert!(e.vacuous);
        assert!(e.inflation().is_infinite());
    }

    #[test]
    fn population_bound_hand_cases() {
        let base = BoundInputs {
            n_t: 200,
            n_s: 50,
            h: 6,
            eta: 0.05,
            varpi: 0.5,
            tail: light(1.0),
            ete: 0.0,
        };
        assert_eq!(vc_population_bound(&base).unwrap().bound_value, 0.0);
        let vac = BoundInputs { h: 200, ete: 1.0, ..base };
        let r = vc_population_bound(&vac).unwrap();
        assert!(r.bound_value.is_infinite() && r.vacuous);
    }

    #[test]
    fn bounded_tail_rejected_in_cv() {
        let inputs = BoundInputs {
            n_t: 80,
            n_s: 20,
            h: 3,
            eta: 0.5,
            varpi: 0.5,
            tail: TailSpec::bounded(1.0),
            ete: 1.0,
        };
        let gaps = GapStats {
            mean: 0.0,
            var: 1.0,
            bernstein_b: 1.0,
        };
        assert!(matches!(ege_bound_cv(&inputs, 100, 5, &gaps), Err(Error::BadTail(_))));
    }

    #[test]
    fn tail_validation() {
        assert!(TailSpec::light(2.0, 1.0).validate().is_err());
        assert!(TailSpec::heavy(2.5, 1.0, 1.0).validate().is_err());
        assert!(TailSpec::heavy(1.5, 0.5, 1.0).validate().is_err());
        assert!(TailSpec::bounded(0.0).validate().is_err());
    }

    #[test]
    fn constant_losses() {
        let t = estimate_tail(&[2.0; 10], 1.5).unwrap();
        match t.regime {
            TailRegime::Heavy { tau, mean_q, .. } => {
                assert_eq!(tau, 1.0);
                assert_eq!(mean_q, 2.0);
            }
            _ => panic!("expected heavy"),
        }
        match estimate_tail(&[2.0; 10], 3.0).unwrap().regime {
            TailRegime::Light { var_q, .. } => assert_eq!(var_q, 0.0),
            _ => panic!("expected light"),
        }
        assert_eq!(estimate_tail(&[], 3.0), Err(Error::EmptyLosses));
    }
}
