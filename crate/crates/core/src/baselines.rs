//! Comparison estimators: least squares through the pseudoinverse and ridge
//! regression with an unpenalized intercept, evaluated along a λ path from one SVD.

use faer::Mat;
use serde::Serialize;

use crate::error::{check_finite, FvsError, Result};
use crate::linalg::{mat_t_vec, mat_vec, mean, reduced_svd, DesignMatrix, RankTolerance};
use crate::probability::RngStream;
use crate::shrinkage::{residual_variance, ShrinkageFit, ShrinkageTarget};
use crate::tuning::fold_assignment;

/// Least squares via `X⁻ y`; identical to shrinkage with `γ = 1`.
pub fn ols_fit(x: &DesignMatrix, y: &[f64]) -> Result<ShrinkageFit> {
    if y.len() != x.n() {
        return Err(FvsError::Dimension(format!("response has length {}, design has {} rows", y.len(), x.n())));
    }
    check_finite("y", y)?;
    if x.rank() < 1 {
        return Err(FvsError::Rank("design has rank 0".into()));
    }
    let fitted = x.project(y)?;
    let coefficients = x.pinv_apply(y)?;
    let sigma_hat2 = residual_variance(x, y, &fitted);
    Ok(ShrinkageFit { gamma: 1.0, coefficients, fitted, target: ShrinkageTarget::Intercept, sigma_hat2 })
}

/// The `p × p` matrix `T` for which the non-intercept columns of `X T` have mean 0 and
/// sample standard deviation 1 (divisor `n − 1`).
pub fn standardization_transform(x: &DesignMatrix) -> Result<Mat<f64>> {
    if !x.has_leading_ones() {
        return Err(FvsError::InvalidInput("standardization needs a leading column of ones".into()));
    }
    if x.n() < 2 {
        return Err(FvsError::Dimension("standardization needs at least two rows".into()));
    }
    let (m, s) = column_moments(x, 1)?;
    let p = x.p();
    let mut t = Mat::<f64>::zeros(p, p);
    t[(0, 0)] = 1.0;
    for j in 1..p {
        t[(0, j)] = -m[j - 1] / s[j - 1];
        t[(j, j)] = 1.0 / s[j - 1];
    }
    Ok(t)
}

/// Means and sample standard deviations of columns `first..p`.
fn column_moments(x: &DesignMatrix, first: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let data = x.data();
    let n = x.n();
    let mut means = Vec::with_capacity(x.p() - first);
    let mut sds = Vec::with_capacity(x.p() - first);
    for j in first..x.p() {
        let col: Vec<f64> = (0..n).map(|i| data[(i, j)]).collect();
        let m = mean(&col);
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        if sd <= 1e-12 {
            return Err(FvsError::InvalidInput(format!("column {j} is constant and cannot be standardized")));
        }
        means.push(m);
        sds.push(sd);
    }
    Ok((means, sds))
}

/// Ridge fits along a λ grid.
#[derive(Debug, Clone, Serialize)]
pub struct RidgePathFit {
    pub lambdas: Vec<f64>,
    /// One coefficient vector per λ, in the parametrization of the supplied design.
    pub coefficients: Vec<Vec<f64>>,
    pub fitted: Vec<Vec<f64>>,
    pub standardized: bool,
    /// The standardization matrix, when the design has a leading ones column and
    /// standardization was requested.
    #[serde(skip)]
    pub transform: Option<Mat<f64>>,
}

/// The grid `{10^(−7 + 0.25 j) : j = 0, …, 44}`.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..45).map(|j| 10f64.powf(-7.0 + 0.25 * j as f64)).collect()
}

/// Centered (and optionally scaled) penalized block with its SVD.
struct RidgeBasis {
    /// Column means of the penalized block.
    means: Vec<f64>,
    /// Column scales (1 when not standardizing).
    scales: Vec<f64>,
    /// `X⁻1`, used to express the free intercept when it is not a column of `X`.
    ones_coef: Option<Vec<f64>>,
    u: Mat<f64>,
    d: Vec<f64>,
    v: Mat<f64>,
}

impl RidgeBasis {
    fn new(x: &DesignMatrix, standardize: bool) -> Result<Self> {
        let n = x.n();
        // A free intercept is always fitted. When the design carries it as column 0
        // only the remaining columns are penalized; otherwise every column is.
        let first = usize::from(x.has_leading_ones());
        let k = x.p() - first;
        if k == 0 {
            return Err(FvsError::Rank("ridge needs at least one penalized column".into()));
        }
        let (means, scales) = if standardize {
            if n < 2 {
                return Err(FvsError::Dimension("standardization needs at least two rows".into()));
            }
            column_moments(x, first)?
        } else {
            let data = x.data();
            let means = (first..x.p()).map(|j| (0..n).map(|i| data[(i, j)]).sum::<f64>() / n as f64).collect();
            (means, vec![1.0; k])
        };
        let data = x.data();
        let block = Mat::from_fn(n, k, |i, j| (data[(i, j + first)] - means[j]) / scales[j]);
        let svd = reduced_svd(block.as_ref(), RankTolerance::Default)?;
        let ones_coef = if first == 0 { Some(x.pinv_apply(&vec![1.0; n])?) } else { None };
        Ok(Self { means, scales, ones_coef, u: svd.u().to_owned(), d: svd.d().to_vec(), v: svd.v().to_owned() })
    }

    /// Coefficients in the design parametrization and fitted values for one λ.
    fn fit(&self, ybar: f64, uy: &[f64], lambda: f64) -> (Vec<f64>, Vec<f64>) {
        let w: Vec<f64> = self.d.iter().zip(uy).map(|(d, u)| d * u / (d * d + lambda)).collect();
        let b_std = mat_vec(self.v.as_ref(), &w);
        let b_pen: Vec<f64> = b_std.iter().zip(&self.scales).map(|(b, s)| b / s).collect();
        let b0 = ybar - b_pen.iter().zip(&self.means).map(|(b, m)| b * m).sum::<f64>();
        let coefficients = match &self.ones_coef {
            None => std::iter::once(b0).chain(b_pen.iter().copied()).collect(),
            // 1 = X X⁻1 because the ones vector lies in the column space.
            Some(oc) => b_pen.iter().zip(oc).map(|(b, o)| b + b0 * o).collect(),
        };
        let shrink: Vec<f64> = self.d.iter().zip(uy).map(|(d, u)| d * d / (d * d + lambda) * u).collect();
        let fitted = mat_vec(self.u.as_ref(), &shrink).into_iter().map(|v| v + ybar).collect();
        (coefficients, fitted)
    }
}

/// Intercept-unpenalized ridge regression `argmin ‖y − Xb‖² + λ‖b₋₁‖²` along a λ grid.
///
/// With `standardize`, the penalty applies to the standardized design `X T`, and the
/// returned coefficients are mapped back to the parametrization of `X`.
pub fn ridge_path(x: &DesignMatrix, y: &[f64], lambdas: &[f64], standardize: bool) -> Result<RidgePathFit> {
    if y.len() != x.n() {
        return Err(FvsError::Dimension(format!("response has length {}, design has {} rows", y.len(), x.n())));
    }
    check_finite("y", y)?;
    if lambdas.is_empty() || lambdas.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(FvsError::InvalidInput("ridge penalties must be positive and finite".into()));
    }
    let basis = RidgeBasis::new(x, standardize)?;
    let ybar = mean(y);
    let yc: Vec<f64> = y.iter().map(|v| v - ybar).collect();
    let uy = mat_t_vec(basis.u.as_ref(), &yc);
    let mut coefficients = Vec::with_capacity(lambdas.len());
    let mut fitted = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let (b, f) = basis.fit(ybar, &uy, lambda);
        coefficients.push(b);
        fitted.push(f);
    }
    let transform = if standardize && x.has_leading_ones() { Some(standardization_transform(x)?) } else { None };
    Ok(RidgePathFit { lambdas: lambdas.to_vec(), coefficients, fitted, standardized: standardize, transform })
}

/// Result of cross-validated ridge.
#[derive(Debug, Clone, Serialize)]
pub struct RidgeCvFit {
    pub lambda: f64,
    pub coefficients: Vec<f64>,
    pub fitted: Vec<f64>,
    /// Total held-out squared error per grid value.
    pub cv_errors: Vec<f64>,
}

/// Ridge with λ chosen by `folds`-fold cross-validation on total held-out squared error.
pub fn ridge_cv(
    x: &DesignMatrix,
    y: &[f64],
    folds: usize,
    lambdas: &[f64],
    standardize: bool,
    rng: &mut RngStream,
) -> Result<RidgeCvFit> {
    if folds < 2 || folds > x.n() {
        return Err(FvsError::InvalidInput(format!("need 2 <= folds <= n, got {folds} folds for n = {}", x.n())));
    }
    let path = ridge_path(x, y, lambdas, standardize)?;
    let sets = fold_assignment(x.n(), folds, rng);
    let mut errors = vec![0.0; lambdas.len()];
    let mut in_fold = vec![false; x.n()];
    for val in &sets {
        in_fold.iter_mut().for_each(|b| *b = false);
        val.iter().for_each(|&i| in_fold[i] = true);
        let train: Vec<usize> = (0..x.n()).filter(|&i| !in_fold[i]).collect();
        let xt = x.select_rows(&train)?;
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let fold_path = ridge_path(&xt, &yt, lambdas, standardize)?;
        let xv = x.select_rows(val)?;
        for (err, b) in errors.iter_mut().zip(&fold_path.coefficients) {
            let pred = mat_vec(xv.data(), b);
            *err += val.iter().zip(&pred).map(|(&i, p)| (y[i] - p) * (y[i] - p)).sum::<f64>();
        }
    }
    let best = (0..lambdas.len())
        .min_by(|&a, &b| errors[a].total_cmp(&errors[b]))
        .expect("grid is nonempty");
    Ok(RidgeCvFit {
        lambda: lambdas[best],
        coefficients: path.coefficients[best].clone(),
        fitted: path.fitted[best].clone(),
        cv_errors: errors,
    })
}
