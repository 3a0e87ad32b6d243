//! Selectors for the shrinkage parameter γ.
//!
//! The oracle value minimizes the expected same-X risk
//! `σ²(γ²r + 1 − γ²) + (1 − γ)²δ²`. When `n > rank(X)` it is estimated by
//! plugging in the F statistic; in the interpolating regime `σ²` is replaced
//! by a penalized-likelihood estimate built from `K = X(X'X + 2nαM)⁻¹X'`.
//! Cross-validation over a γ grid is available in either regime.

use serde::Serialize;

use crate::error::{check_finite, FvsError, Result};
use crate::linalg::{centered_ss, dot, mean, mat_vec, DesignMatrix, PenalizedGram};
use crate::probability::{f_quantile, RngStream};
use crate::shrinkage::submodel_design;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningMethod {
    Oracle,
    FRatio,
    FRatioQ90,
    FRatioQ95,
    Cv,
    HighdimBar,
    HighdimBarCorrected,
    /// `max(0, 1 − 1/F)` with `σ̂²` replaced by the penalized estimate `σ̌²`.
    PluginRep,
    SubmodelFRatio,
    SubmodelFRatioQ90,
    SubmodelFRatioQ95,
    SubmodelOracle,
}

impl TuningMethod {
    pub fn is_f_based(self) -> bool {
        matches!(
            self,
            TuningMethod::FRatio
                | TuningMethod::FRatioQ90
                | TuningMethod::FRatioQ95
                | TuningMethod::PluginRep
                | TuningMethod::SubmodelFRatio
                | TuningMethod::SubmodelFRatioQ90
                | TuningMethod::SubmodelFRatioQ95
        )
    }
}

/// Selected γ with the statistics it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningResult {
    pub gamma: f64,
    pub method: TuningMethod,
    pub f_stat: Option<f64>,
    pub sigma2_estimate: Option<f64>,
    pub alpha: Option<f64>,
    /// Set when the raw value fell outside `[0, 1]` and was truncated.
    pub clamped: bool,
}

impl TuningResult {
    fn plain(gamma: f64, method: TuningMethod) -> Self {
        Self { gamma, method, f_stat: None, sigma2_estimate: None, alpha: None, clamped: false }
    }
}

/// F-quantile threshold for the thresholded selectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdLevel {
    Q90,
    Q95,
}

impl ThresholdLevel {
    pub fn probability(self) -> f64 {
        match self {
            ThresholdLevel::Q90 => 0.90,
            ThresholdLevel::Q95 => 0.95,
        }
    }
}

fn check_response(x: &DesignMatrix, y: &[f64]) -> Result<()> {
    if y.len() != x.n() {
        return Err(FvsError::Dimension(format!("response has length {}, design has {} rows", y.len(), x.n())));
    }
    check_finite("y", y)
}

/// Squared norms below this fraction of `‖y‖²` are treated as exact zeros.
fn negligible(y: &[f64]) -> f64 {
    1e-24 * dot(y, y).max(f64::MIN_POSITIVE)
}

/// Unbiased residual variance `‖y − P_X y‖² / (n − rank(X))`.
pub fn sigma_hat2(x: &DesignMatrix, y: &[f64]) -> Result<f64> {
    check_response(x, y)?;
    if x.n() <= x.rank() {
        return Err(FvsError::Rank(format!(
            "residual variance needs n > rank(X), got n = {} and rank = {}; use a penalized estimate",
            x.n(),
            x.rank()
        )));
    }
    let py = x.project(y)?;
    let rss: f64 = y.iter().zip(&py).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(rss / (x.n() - x.rank()) as f64)
}

/// Nested-model F statistic `‖P_X y − P₀ y‖² / (σ̂² (r − r₀))` for a given `P₀ y`.
fn nested_f(x: &DesignMatrix, y: &[f64], p0y: &[f64], r0: usize) -> Result<f64> {
    let py = x.project(y)?;
    let num: f64 = py.iter().zip(p0y).map(|(a, b)| (a - b) * (a - b)).sum();
    let rss: f64 = y.iter().zip(&py).map(|(a, b)| (a - b) * (a - b)).sum();
    let tiny = negligible(y);
    if num <= tiny {
        return Ok(0.0);
    }
    if rss <= tiny {
        return Err(FvsError::Numerical("zero residual variance makes the F statistic infinite".into()));
    }
    let s2 = rss / (x.n() - x.rank()) as f64;
    Ok(num / (s2 * (x.rank() - r0) as f64))
}

/// F statistic comparing the intercept-only model with the full model.
pub fn f_statistic(x: &DesignMatrix, y: &[f64]) -> Result<f64> {
    check_response(x, y)?;
    if x.n() <= x.rank() || x.rank() < 2 {
        return Err(FvsError::Rank(format!(
            "F statistic needs n > rank(X) >= 2, got n = {} and rank = {}",
            x.n(),
            x.rank()
        )));
    }
    let ybar = vec![mean(y); y.len()];
    nested_f(x, y, &ybar, 1)
}

/// `(1 − 1/F) · 1(F > 1)`.
pub fn gamma_hat(f: f64) -> Result<f64> {
    if f.is_nan() || f < 0.0 {
        return Err(FvsError::InvalidInput(format!("F statistic must be nonnegative, got {f}")));
    }
    Ok(if f > 1.0 { 1.0 - 1.0 / f } else { 0.0 })
}

/// `(1 − 1/F) · 1(F ≥ f_q)` with `f_q` the F(d1, d2) quantile at the given level.
pub fn gamma_hat_thresholded(f: f64, level: ThresholdLevel, d1: usize, d2: usize) -> Result<f64> {
    if f.is_nan() || f < 0.0 {
        return Err(FvsError::InvalidInput(format!("F statistic must be nonnegative, got {f}")));
    }
    let fq = f_quantile(level.probability(), d1 as f64, d2 as f64)?;
    // Every F quantile at level ≥ 0.9 exceeds 1, so 1 − 1/F is positive whenever the indicator is on.
    Ok(if f >= fq { 1.0 - 1.0 / f } else { 0.0 })
}

/// Risk-minimizing γ: `δ² / (σ²(r − 1) + δ²)`.
pub fn gamma_opt(delta2: f64, sigma2: f64, r: usize) -> Result<f64> {
    gamma_opt_submodel(delta2, sigma2, r, 1)
}

/// Risk-minimizing γ for shrinkage toward a rank-`r0` submodel.
pub fn gamma_opt_submodel(delta2: f64, sigma2: f64, r: usize, r0: usize) -> Result<f64> {
    if r <= r0 || r0 == 0 {
        return Err(FvsError::InvalidInput(format!("need r > r0 >= 1, got r = {r}, r0 = {r0}")));
    }
    if !(delta2.is_finite() && delta2 >= 0.0) || !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(FvsError::InvalidInput(format!("need δ² >= 0 and σ² > 0, got {delta2} and {sigma2}")));
    }
    Ok(delta2 / (sigma2 * (r - r0) as f64 + delta2))
}

/// Expected same-X risk `E‖μ − fitted‖²` of shrinkage toward the ones vector.
pub fn fvs_risk(gamma: f64, delta2: f64, sigma2: f64, r: usize) -> f64 {
    sigma2 * (gamma * gamma * r as f64 + 1.0 - gamma * gamma) + (1.0 - gamma) * (1.0 - gamma) * delta2
}

/// Expected same-X risk of shrinkage toward a rank-`r0` submodel.
pub fn fvs_risk_submodel(gamma: f64, delta2: f64, sigma2: f64, r: usize, r0: usize) -> f64 {
    sigma2 * (gamma * gamma * r as f64 + (1.0 - gamma * gamma) * r0 as f64) + (1.0 - gamma) * (1.0 - gamma) * delta2
}

/// The oracle selector wrapped as a [`TuningResult`].
pub fn oracle(delta2: f64, sigma2: f64, r: usize) -> Result<TuningResult> {
    let mut t = TuningResult::plain(gamma_opt(delta2, sigma2, r)?, TuningMethod::Oracle);
    t.sigma2_estimate = Some(sigma2);
    Ok(t)
}

/// F-based estimate of γ, optionally thresholded at an F quantile.
pub fn gamma_f_ratio(x: &DesignMatrix, y: &[f64], threshold: Option<ThresholdLevel>) -> Result<TuningResult> {
    let method = match threshold {
        None => TuningMethod::FRatio,
        Some(ThresholdLevel::Q90) => TuningMethod::FRatioQ90,
        Some(ThresholdLevel::Q95) => TuningMethod::FRatioQ95,
    };
    let s2 = sigma_hat2(x, y)?;
    let f = f_statistic(x, y);
    finish_f(f, s2, method, threshold, x.rank() - 1, x.n() - x.rank())
}

fn finish_f(
    f: Result<f64>,
    s2: f64,
    method: TuningMethod,
    threshold: Option<ThresholdLevel>,
    d1: usize,
    d2: usize,
) -> Result<TuningResult> {
    let (gamma, f_stat) = match f {
        Ok(f) => {
            let g = match threshold {
                None => gamma_hat(f)?,
                Some(level) => gamma_hat_thresholded(f, level, d1, d2)?,
            };
            (g, f)
        }
        // Zero residual variance: the F → ∞ limit.
        Err(FvsError::Numerical(_)) => (1.0, f64::INFINITY),
        Err(e) => return Err(e),
    };
    let mut t = TuningResult::plain(gamma, method);
    t.f_stat = Some(f_stat);
    t.sigma2_estimate = Some(s2);
    Ok(t)
}

/// F-based estimate of γ for shrinkage toward the submodel spanned by `submodel_cols`.
pub fn gamma_tilde_submodel(
    x: &DesignMatrix,
    submodel_cols: &[usize],
    y: &[f64],
    threshold: Option<ThresholdLevel>,
) -> Result<TuningResult> {
    let method = match threshold {
        None => TuningMethod::SubmodelFRatio,
        Some(ThresholdLevel::Q90) => TuningMethod::SubmodelFRatioQ90,
        Some(ThresholdLevel::Q95) => TuningMethod::SubmodelFRatioQ95,
    };
    let x0 = submodel_design(x, submodel_cols)?;
    let s2 = sigma_hat2(x, y)?;
    let p0y = x0.project(y)?;
    let f = nested_f(x, y, &p0y, x0.rank());
    finish_f(f, s2, method, threshold, x.rank() - x0.rank(), x.n() - x.rank())
}

/// `K y` with `K = X(X'X + 2nαM)⁻¹X'`.
pub fn k_matrix_apply(x: &DesignMatrix, alpha: f64, y: &[f64]) -> Result<Vec<f64>> {
    PenalizedGram::new(x, alpha)?.apply(y)
}

/// `tr(K)`.
pub fn k_trace(x: &DesignMatrix, alpha: f64) -> Result<f64> {
    Ok(PenalizedGram::new(x, alpha)?.trace())
}

struct PenalizedFit {
    /// `y'(I − K)y`.
    quad: f64,
    trace: f64,
}

fn penalized_fit(x: &DesignMatrix, y: &[f64], alpha: f64) -> Result<PenalizedFit> {
    check_response(x, y)?;
    let k = PenalizedGram::new(x, alpha)?;
    let ky = k.apply(y)?;
    let quad: f64 = y.iter().zip(&ky).map(|(a, b)| a * (a - b)).sum();
    Ok(PenalizedFit { quad: quad.max(0.0), trace: k.trace() })
}

fn correction(trace: f64, r: usize) -> Result<f64> {
    let c = 1.0 - trace / r as f64;
    if c <= 1e-10 {
        return Err(FvsError::Numerical(format!("variance correction factor C = {c:.3e} is degenerate")));
    }
    Ok(c)
}

/// Penalized-likelihood variance estimate `n⁻¹ y'(I − K)y`, optionally divided by
/// `C = 1 − tr(K)/rank(X)`.
pub fn sigma_check2(x: &DesignMatrix, y: &[f64], alpha: f64, corrected: bool) -> Result<f64> {
    let pf = penalized_fit(x, y, alpha)?;
    let s2 = pf.quad / x.n() as f64;
    if corrected {
        Ok(s2 / correction(pf.trace, x.rank())?)
    } else {
        Ok(s2)
    }
}

/// `α = nᵗ / (2‖y − ȳ1‖²)`.
pub fn alpha_schedule(t: f64, y: &[f64]) -> Result<f64> {
    if !t.is_finite() {
        return Err(FvsError::InvalidInput(format!("schedule exponent must be finite, got {t}")));
    }
    check_finite("y", y)?;
    if y.is_empty() {
        return Err(FvsError::Dimension("empty response".into()));
    }
    let ss = centered_ss(y);
    if ss <= negligible(y) {
        return Err(FvsError::InvalidInput("alpha schedule is undefined for a constant response".into()));
    }
    Ok((y.len() as f64).powf(t) / (2.0 * ss))
}

/// High-dimensional plug-in estimate of γ.
///
/// Uncorrected: `y'(I − P₁ − ((r−1)/r)(I − K))y / y'(I − P₁)y`.
/// Corrected: the fraction `(r−1)/r` becomes `(r−1)/(r − tr K)` and the result is truncated at 0.
/// Both are truncated to `[0, 1]`, with `clamped` recording any truncation.
pub fn gamma_bar(x: &DesignMatrix, y: &[f64], alpha: f64, corrected: bool) -> Result<TuningResult> {
    let r = x.rank();
    if r < 2 {
        return Err(FvsError::Rank(format!("shrinkage needs rank(X) >= 2, got {r}")));
    }
    check_response(x, y)?;
    let ss = centered_ss(y);
    if ss <= negligible(y) {
        return Err(FvsError::InvalidInput("gamma_bar is undefined for a constant response".into()));
    }
    let pf = penalized_fit(x, y, alpha)?;
    let rf = r as f64;
    let (raw, s2) = if corrected {
        let gap = rf - pf.trace;
        if gap <= 1e-10 {
            return Err(FvsError::Numerical(format!("rank minus tr(K) = {gap:.3e} is degenerate")));
        }
        let raw = (ss - (rf - 1.0) / gap * pf.quad) / ss;
        (raw, pf.quad / x.n() as f64 / correction(pf.trace, r)?)
    } else {
        ((ss - (rf - 1.0) / rf * pf.quad) / ss, pf.quad / x.n() as f64)
    };
    let gamma = raw.clamp(0.0, 1.0);
    Ok(TuningResult {
        gamma,
        method: if corrected { TuningMethod::HighdimBarCorrected } else { TuningMethod::HighdimBar },
        f_stat: None,
        sigma2_estimate: Some(s2),
        alpha: Some(alpha),
        clamped: gamma != raw,
    })
}

/// `max(0, 1 − 1/F)` where the F statistic uses `σ̌²` in place of `σ̂²`.
pub fn gamma_plugin_rep(x: &DesignMatrix, y: &[f64], alpha: f64) -> Result<TuningResult> {
    let r = x.rank();
    if r < 2 {
        return Err(FvsError::Rank(format!("shrinkage needs rank(X) >= 2, got {r}")));
    }
    let pf = penalized_fit(x, y, alpha)?;
    let s2 = pf.quad / x.n() as f64;
    let py = x.project(y)?;
    let m = mean(y);
    let num: f64 = py.iter().map(|v| (v - m) * (v - m)).sum();
    let f = if num <= negligible(y) {
        0.0
    } else if s2 <= negligible(y) / x.n() as f64 {
        f64::INFINITY
    } else {
        num / (s2 * (r - 1) as f64)
    };
    Ok(TuningResult {
        gamma: gamma_hat(f)?,
        method: TuningMethod::PluginRep,
        f_stat: Some(f),
        sigma2_estimate: Some(s2),
        alpha: Some(alpha),
        clamped: false,
    })
}

/// The grid `{k/99 : k = 0, …, 99}`.
pub fn default_cv_grid() -> Vec<f64> {
    (0..100).map(|k| k as f64 / 99.0).collect()
}

/// Splits `0..n` into `folds` random groups whose sizes differ by at most one.
pub fn fold_assignment(n: usize, folds: usize, rng: &mut RngStream) -> Vec<Vec<usize>> {
    let perm = rng.permutation(n);
    (0..folds)
        .map(|k| {
            let mut idx = perm[k * n / folds..(k + 1) * n / folds].to_vec();
            idx.sort_unstable();
            idx
        })
        .collect()
}

/// Total held-out squared error for every grid value over the given folds.
pub fn cv_errors(x: &DesignMatrix, y: &[f64], fold_sets: &[Vec<usize>], grid: &[f64]) -> Result<Vec<f64>> {
    check_response(x, y)?;
    let n = x.n();
    let mut errors = vec![0.0; grid.len()];
    let mut in_fold = vec![false; n];
    for val in fold_sets {
        in_fold.iter_mut().for_each(|b| *b = false);
        val.iter().for_each(|&i| in_fold[i] = true);
        let train: Vec<usize> = (0..n).filter(|&i| !in_fold[i]).collect();
        let xt = x.select_rows(&train)?;
        if xt.rank() < 2 {
            return Err(FvsError::Rank(format!("a training fold has rank {} < 2", xt.rank())));
        }
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let ybar = mean(&yt);
        let b_ls = xt.pinv_apply(&yt)?;
        let b_one = xt.pinv_apply(&vec![1.0; yt.len()])?;
        let xv = x.select_rows(val)?;
        let full = mat_vec(xv.data(), &b_ls);
        let base = mat_vec(xv.data(), &b_one);
        for (err, &g) in errors.iter_mut().zip(grid) {
            *err += val
                .iter()
                .enumerate()
                .map(|(k, &i)| {
                    let pred = g * full[k] + (1.0 - g) * ybar * base[k];
                    (y[i] - pred) * (y[i] - pred)
                })
                .sum::<f64>();
        }
    }
    Ok(errors)
}

/// γ minimizing the total `folds`-fold cross-validation error over `grid`, ties going to the smaller γ.
pub fn cv_gamma(x: &DesignMatrix, y: &[f64], folds: usize, grid: &[f64], rng: &mut RngStream) -> Result<TuningResult> {
    if folds < 2 || folds > x.n() {
        return Err(FvsError::InvalidInput(format!("need 2 <= folds <= n, got {folds} folds for n = {}", x.n())));
    }
    if grid.is_empty() || grid.iter().any(|g| !(0.0..=1.0).contains(g)) {
        return Err(FvsError::InvalidInput("gamma grid must be nonempty with values in [0, 1]".into()));
    }
    let sets = fold_assignment(x.n(), folds, rng);
    let errors = cv_errors(x, y, &sets, grid)?;
    let best = errors.iter().cloned().fold(f64::INFINITY, f64::min);
    let tol = 1e-10 * best + 1e-20 * dot(y, y);
    let gamma = grid
        .iter()
        .zip(&errors)
        .filter(|(_, &e)| e <= best + tol)
        .map(|(&g, _)| g)
        .fold(f64::INFINITY, f64::min);
    Ok(TuningResult::plain(gamma, TuningMethod::Cv))
}
