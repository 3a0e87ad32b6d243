//! The fitted-value shrinkage estimator.
//!
//! For `γ ∈ [0, 1]` the fitted values are `γ P_X y + (1 − γ) P₀ y`, where `P₀`
//! projects onto the ones vector (or onto a submodel containing it), and the
//! coefficients are the minimum-norm solution reproducing those fitted values.
//! Because `P_X` depends on `X` only through its column space, the fitted
//! values are unchanged by any invertible reparametrization of the design.

use faer::MatRef;
use serde::Serialize;

use crate::error::{check_finite, FvsError, Result};
use crate::linalg::{mat_vec, mean, DesignMatrix};

/// The subspace the fit is shrunk toward.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum ShrinkageTarget {
    /// The ones vector: fitted values shrink toward `ȳ`.
    Intercept,
    /// The span of the listed design columns, which must include column 0.
    Submodel(Vec<usize>),
}

#[derive(Debug, Clone, Serialize)]
pub struct ShrinkageFit {
    pub gamma: f64,
    pub coefficients: Vec<f64>,
    pub fitted: Vec<f64>,
    pub target: ShrinkageTarget,
    /// `RSS / (n − r)` when the design leaves residual degrees of freedom.
    pub sigma_hat2: Option<f64>,
}

fn check_response(x: &DesignMatrix, y: &[f64]) -> Result<()> {
    if y.len() != x.n() {
        return Err(FvsError::Dimension(format!("response has length {}, design has {} rows", y.len(), x.n())));
    }
    check_finite("y", y)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(FvsError::InvalidInput(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    Ok(())
}

pub(crate) fn residual_variance(x: &DesignMatrix, y: &[f64], py: &[f64]) -> Option<f64> {
    let df = x.n().checked_sub(x.rank()).filter(|&d| d > 0)?;
    let rss: f64 = y.iter().zip(py).map(|(a, b)| (a - b) * (a - b)).sum();
    Some(rss / df as f64)
}

/// Blends `P_X y` with a target fit and maps the result back to coefficients.
fn blend(x: &DesignMatrix, y: &[f64], py: &[f64], target_fit: &[f64], gamma: f64, target: ShrinkageTarget) -> Result<ShrinkageFit> {
    let fitted: Vec<f64> = py.iter().zip(target_fit).map(|(a, b)| gamma * a + (1.0 - gamma) * b).collect();
    let blended_y: Vec<f64> = y.iter().zip(target_fit).map(|(a, b)| gamma * a + (1.0 - gamma) * b).collect();
    let coefficients = x.pinv_apply(&blended_y)?;
    Ok(ShrinkageFit { gamma, coefficients, fitted, target, sigma_hat2: residual_variance(x, y, py) })
}

/// Shrinks the least-squares fit toward the mean of `y`.
pub fn fit_fvs(x: &DesignMatrix, y: &[f64], gamma: f64) -> Result<ShrinkageFit> {
    check_gamma(gamma)?;
    check_response(x, y)?;
    if x.rank() < 2 {
        return Err(FvsError::Rank(format!("shrinkage needs rank(X) >= 2, got {}", x.rank())));
    }
    let py = x.project(y)?;
    let ybar = vec![mean(y); y.len()];
    blend(x, y, &py, &ybar, gamma, ShrinkageTarget::Intercept)
}

/// Checks a submodel column list and returns the submodel design.
pub(crate) fn submodel_design(x: &DesignMatrix, cols: &[usize]) -> Result<DesignMatrix> {
    if cols.first() != Some(&0) {
        return Err(FvsError::InvalidInput("submodel columns must start with the intercept column 0".into()));
    }
    if cols.windows(2).any(|w| w[0] >= w[1]) {
        return Err(FvsError::InvalidInput("submodel columns must be strictly increasing".into()));
    }
    if cols.len() >= x.p() {
        return Err(FvsError::InvalidInput("submodel must be a proper subset of the design columns".into()));
    }
    let x0 = x.select_columns(cols)?;
    if x0.rank() >= x.rank() {
        return Err(FvsError::Rank(format!(
            "submodel rank {} must be below design rank {}",
            x0.rank(),
            x.rank()
        )));
    }
    Ok(x0)
}

/// Shrinks the least-squares fit toward the least-squares fit of a submodel.
pub fn fit_fvs_submodel(x: &DesignMatrix, submodel_cols: &[usize], y: &[f64], gamma: f64) -> Result<ShrinkageFit> {
    check_gamma(gamma)?;
    check_response(x, y)?;
    let x0 = submodel_design(x, submodel_cols)?;
    let py = x.project(y)?;
    let p0y = x0.project(y)?;
    blend(x, y, &py, &p0y, gamma, ShrinkageTarget::Submodel(submodel_cols.to_vec()))
}

/// Predictions `X_new β̂` for new rows.
pub fn predict(fit: &ShrinkageFit, x_new: MatRef<'_, f64>) -> Result<Vec<f64>> {
    if x_new.ncols() != fit.coefficients.len() {
        return Err(FvsError::Dimension(format!(
            "new design has {} columns, fit has {} coefficients",
            x_new.ncols(),
            fit.coefficients.len()
        )));
    }
    Ok(mat_vec(x_new, &fit.coefficients))
}
