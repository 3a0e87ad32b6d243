//! Dense linear algebra on top of `faer`: reduced SVD with a rank cutoff,
//! the design-matrix wrapper, Moore–Penrose applies, Gram–Schmidt and the
//! penalized Gram solve used by the high-dimensional tuning rules.

use faer::{Col, ColRef, Mat, MatRef};

use crate::error::{check_finite, FvsError, Result};

/// Cutoff below which singular values are treated as zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum RankTolerance {
    /// `max(n, p) · d_max · 2^-45`.
    #[default]
    Default,
    /// `factor · d_max`.
    Relative(f64),
    /// A fixed threshold.
    Absolute(f64),
}

impl RankTolerance {
    fn threshold(self, n: usize, p: usize, d_max: f64) -> Result<f64> {
        let t = match self {
            RankTolerance::Default => n.max(p) as f64 * d_max * 2f64.powi(-45),
            RankTolerance::Relative(f) => f * d_max,
            RankTolerance::Absolute(t) => t,
        };
        if !t.is_finite() || t < 0.0 {
            return Err(FvsError::InvalidInput(format!("rank tolerance {t} is not a nonnegative number")));
        }
        Ok(t)
    }
}

/// Reduced SVD `A = U diag(d) V'` keeping only singular values above the cutoff.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    u: Mat<f64>,
    d: Vec<f64>,
    v: Mat<f64>,
    tolerance: f64,
}

impl SvdFactors {
    /// Left singular vectors, `n × rank`.
    pub fn u(&self) -> MatRef<'_, f64> {
        self.u.as_ref()
    }
    /// Retained singular values in nonincreasing order.
    pub fn d(&self) -> &[f64] {
        &self.d
    }
    /// Right singular vectors, `p × rank`.
    pub fn v(&self) -> MatRef<'_, f64> {
        self.v.as_ref()
    }
    pub fn rank(&self) -> usize {
        self.d.len()
    }
    pub fn nrows(&self) -> usize {
        self.u.nrows()
    }
    pub fn ncols(&self) -> usize {
        self.v.nrows()
    }
    /// The cutoff that was applied.
    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }
}

/// Computes the reduced SVD of `a`, dropping singular values at or below the tolerance.
pub fn reduced_svd(a: MatRef<'_, f64>, tol: RankTolerance) -> Result<SvdFactors> {
    let (n, p) = (a.nrows(), a.ncols());
    if n == 0 || p == 0 {
        return Err(FvsError::Dimension(format!("cannot factor an empty {n}x{p} matrix")));
    }
    for j in 0..p {
        for i in 0..n {
            if !a[(i, j)].is_finite() {
                return Err(FvsError::InvalidInput(format!("matrix entry ({i}, {j}) is not finite")));
            }
        }
    }
    if let Some(f) = gram_svd(a, tol)? {
        return Ok(f);
    }
    // faer's thin SVD is fastest on tall input, so factor the transpose of wide matrices.
    let (u_full, s, v_full) = if n >= p {
        let svd = a.thin_svd().map_err(|e| FvsError::Numerical(format!("SVD failed: {e:?}")))?;
        (svd.U().to_owned(), svd.S().column_vector().to_owned(), svd.V().to_owned())
    } else {
        let svd = a
            .transpose()
            .thin_svd()
            .map_err(|e| FvsError::Numerical(format!("SVD failed: {e:?}")))?;
        (svd.V().to_owned(), svd.S().column_vector().to_owned(), svd.U().to_owned())
    };
    let d_max = if s.nrows() > 0 { s[0] } else { 0.0 };
    let tolerance = tol.threshold(n, p, d_max)?;
    let q = (0..s.nrows()).take_while(|&i| s[i] > tolerance).count();
    let u = u_full.as_ref().subcols(0, q).to_owned();
    let v = v_full.as_ref().subcols(0, q).to_owned();
    let d = (0..q).map(|i| s[i]).collect();
    Ok(SvdFactors { u, d, v, tolerance })
}

/// Short-side size from which large designs are factored through their Gram matrix.
const GRAM_MIN_DIM: usize = 512;
/// Largest `λ_max / λ_min` of the Gram matrix accepted on that path, i.e. condition number 10³.
const GRAM_MAX_RATIO: f64 = 1e6;

/// SVD from the eigendecomposition of the smaller Gram matrix (`AA'` or `A'A`),
/// with the other factor recovered as `A'U D⁻¹` (or `A V D⁻¹`).
///
/// Squaring the matrix loses accuracy in proportion to κ², so this is only used on
/// large, well-conditioned, full-rank input; `None` sends the caller to the direct SVD.
fn gram_svd(a: MatRef<'_, f64>, tol: RankTolerance) -> Result<Option<SvdFactors>> {
    let (n, p) = (a.nrows(), a.ncols());
    let m = n.min(p);
    if m < GRAM_MIN_DIM {
        return Ok(None);
    }
    let wide = n <= p;
    let gram = if wide { a * a.transpose() } else { a.transpose() * a };
    let eig = gram
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| FvsError::Numerical(format!("eigendecomposition failed: {e:?}")))?;
    let lambda = eig.S().column_vector();
    // Eigenvalues come in nondecreasing order.
    let (l_min, l_max) = (lambda[0], lambda[m - 1]);
    if !(l_min > 0.0 && l_max <= GRAM_MAX_RATIO * l_min) {
        return Ok(None);
    }
    let d: Vec<f64> = (0..m).rev().map(|i| lambda[i].sqrt()).collect();
    let tolerance = tol.threshold(n, p, d[0])?;
    if d[m - 1] <= tolerance {
        return Ok(None);
    }
    let w = eig.U();
    let short = Mat::from_fn(m, m, |i, j| w[(i, m - 1 - j)]);
    let mut long = if wide { a.transpose() * &short } else { a * &short };
    for (j, dj) in d.iter().enumerate() {
        for i in 0..long.nrows() {
            long[(i, j)] /= dj;
        }
    }
    let (u, v) = if wide { (short, long) } else { (long, short) };
    Ok(Some(SvdFactors { u, d, v, tolerance }))
}

/// `X⁻ y` through the reduced SVD.
pub fn pseudoinverse_apply(svd: &SvdFactors, y: &[f64]) -> Result<Vec<f64>> {
    if y.len() != svd.nrows() {
        return Err(FvsError::Dimension(format!("vector of length {} against {} rows", y.len(), svd.nrows())));
    }
    check_finite("y", y)?;
    let mut w = mat_t_vec(svd.u(), y);
    for (wi, di) in w.iter_mut().zip(&svd.d) {
        *wi /= di;
    }
    Ok(mat_vec(svd.v(), &w))
}

/// `P_X y = U U' y`.
pub fn projector_apply(svd: &SvdFactors, y: &[f64]) -> Result<Vec<f64>> {
    if y.len() != svd.nrows() {
        return Err(FvsError::Dimension(format!("vector of length {} against {} rows", y.len(), svd.nrows())));
    }
    check_finite("y", y)?;
    let w = mat_t_vec(svd.u(), y);
    Ok(mat_vec(svd.u(), &w))
}

/// How the design carries the intercept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterceptForm {
    /// The first column is identically one.
    LeadingColumn,
    /// The ones vector lies in the column space without being a column.
    InSpan,
}

/// An `n × p` design whose column space contains the ones vector, with its SVD.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    data: Mat<f64>,
    svd: SvdFactors,
    intercept: InterceptForm,
    tol: RankTolerance,
}

impl DesignMatrix {
    /// Wraps a design whose first column is identically one.
    pub fn new(data: Mat<f64>) -> Result<Self> {
        Self::with_tolerance(data, RankTolerance::Default)
    }

    /// Same as [`DesignMatrix::new`] with an explicit rank cutoff.
    pub fn with_tolerance(data: Mat<f64>, tol: RankTolerance) -> Result<Self> {
        if data.ncols() == 0 || data.nrows() == 0 {
            return Err(FvsError::Dimension("design has no rows or no columns".into()));
        }
        if let Some(i) = (0..data.nrows()).find(|&i| (data[(i, 0)] - 1.0).abs() > 1e-12) {
            return Err(FvsError::InvalidInput(format!(
                "first design column must be identically 1 (row {i} holds {})",
                data[(i, 0)]
            )));
        }
        let svd = reduced_svd(data.as_ref(), tol)?;
        Ok(Self { data, svd, intercept: InterceptForm::LeadingColumn, tol })
    }

    /// Wraps a design whose column space contains the ones vector, for example `X T`
    /// after a general reparametrization.
    pub fn spanning_intercept(data: Mat<f64>) -> Result<Self> {
        Self::spanning_intercept_with_tolerance(data, RankTolerance::Default)
    }

    pub fn spanning_intercept_with_tolerance(data: Mat<f64>, tol: RankTolerance) -> Result<Self> {
        if data.ncols() == 0 || data.nrows() == 0 {
            return Err(FvsError::Dimension("design has no rows or no columns".into()));
        }
        let leading = (0..data.nrows()).all(|i| (data[(i, 0)] - 1.0).abs() <= 1e-12);
        let svd = reduced_svd(data.as_ref(), tol)?;
        if !leading {
            let n = data.nrows();
            let ones = vec![1.0; n];
            let p1 = projector_apply(&svd, &ones)?;
            let resid = p1.iter().map(|v| (1.0 - v) * (1.0 - v)).sum::<f64>().sqrt();
            if resid > 1e-8 * (n as f64).sqrt() {
                return Err(FvsError::Rank(format!(
                    "ones vector is not in the column space (residual norm {resid:.3e})"
                )));
            }
        }
        let intercept = if leading { InterceptForm::LeadingColumn } else { InterceptForm::InSpan };
        Ok(Self { data, svd, intercept, tol })
    }

    /// Builds a design from row-major rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(mat_from_rows(rows)?)
    }

    fn rebuild(&self, data: Mat<f64>) -> Result<Self> {
        match self.intercept {
            InterceptForm::LeadingColumn => Self::with_tolerance(data, self.tol),
            InterceptForm::InSpan => Self::spanning_intercept_with_tolerance(data, self.tol),
        }
    }

    /// The rows listed in `rows`, in that order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&i| i >= self.n()) {
            return Err(FvsError::Dimension(format!("row index {bad} out of range for n = {}", self.n())));
        }
        let data = Mat::from_fn(rows.len(), self.p(), |i, j| self.data[(rows[i], j)]);
        self.rebuild(data)
    }

    /// The columns listed in `cols`, in that order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(&bad) = cols.iter().find(|&&j| j >= self.p()) {
            return Err(FvsError::Dimension(format!("column index {bad} out of range for p = {}", self.p())));
        }
        let data = Mat::from_fn(self.n(), cols.len(), |i, j| self.data[(i, cols[j])]);
        Self::spanning_intercept_with_tolerance(data, self.tol)
    }

    /// The reparametrized design `X T`.
    pub fn transform(&self, t: MatRef<'_, f64>) -> Result<Self> {
        if t.nrows() != self.p() {
            return Err(FvsError::Dimension(format!("transform has {} rows, design has {} columns", t.nrows(), self.p())));
        }
        let data = self.data.as_ref() * t;
        Self::spanning_intercept_with_tolerance(data, self.tol)
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }
    pub fn p(&self) -> usize {
        self.data.ncols()
    }
    pub fn rank(&self) -> usize {
        self.svd.rank()
    }
    pub fn data(&self) -> MatRef<'_, f64> {
        self.data.as_ref()
    }
    pub fn svd(&self) -> &SvdFactors {
        &self.svd
    }
    pub fn intercept(&self) -> InterceptForm {
        self.intercept
    }
    pub fn has_leading_ones(&self) -> bool {
        self.intercept == InterceptForm::LeadingColumn
    }
    pub fn tolerance(&self) -> RankTolerance {
        self.tol
    }

    /// `P_X y`.
    pub fn project(&self, y: &[f64]) -> Result<Vec<f64>> {
        projector_apply(&self.svd, y)
    }

    /// Minimum-norm solution `X⁻ y`.
    pub fn pinv_apply(&self, y: &[f64]) -> Result<Vec<f64>> {
        pseudoinverse_apply(&self.svd, y)
    }

    /// `X b`.
    pub fn apply(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.p() {
            return Err(FvsError::Dimension(format!("coefficient length {} against p = {}", b.len(), self.p())));
        }
        Ok(mat_vec(self.data.as_ref(), b))
    }
}

/// Orthonormalizes the columns of `a` (two-pass classical Gram–Schmidt).
///
/// Fails with [`FvsError::Singular`] naming the first column that is numerically
/// dependent on its predecessors.
pub fn gram_schmidt(a: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let (n, k) = (a.nrows(), a.ncols());
    if k > n {
        return Err(FvsError::Dimension(format!("cannot orthonormalize {k} columns in dimension {n}")));
    }
    let mut q = Mat::<f64>::zeros(n, k);
    for j in 0..k {
        let mut v: Vec<f64> = (0..n).map(|i| a[(i, j)]).collect();
        check_finite("column", &v)?;
        let original = norm(&v);
        for _ in 0..2 {
            for l in 0..j {
                let ql = q.col(l);
                let c: f64 = (0..n).map(|i| ql[i] * v[i]).sum();
                for (i, vi) in v.iter_mut().enumerate() {
                    *vi -= c * ql[i];
                }
            }
        }
        let r = norm(&v);
        if original == 0.0 || r <= 1e-10 * original {
            return Err(FvsError::Singular { column: j });
        }
        for (i, vi) in v.iter().enumerate() {
            q[(i, j)] = vi / r;
        }
    }
    Ok(q)
}

/// Solves `(X'X + 2nα M) z = b` with `M = diag(0, 1, …, 1)`.
pub fn penalized_gram_solve(x: &DesignMatrix, alpha: f64, b: &[f64]) -> Result<Vec<f64>> {
    PenalizedGram::new(x, alpha)?.solve(b)
}

/// The penalized Gram inverse `A⁻¹ = (X'X + 2nα M)⁻¹` and the smoother
/// `K = X A⁻¹ X'`, represented through the SVD of `X`.
///
/// With `R = X'X + cI` and `c = 2nα`, `A = R − c e₁e₁'`, so `A⁻¹` follows from a
/// Sherman–Morrison downdate of the ridge inverse.
#[derive(Debug, Clone)]
pub struct PenalizedGram<'a> {
    x: &'a DesignMatrix,
    c: f64,
    v1: Vec<f64>,
    denom: f64,
}

impl<'a> PenalizedGram<'a> {
    pub fn new(x: &'a DesignMatrix, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(FvsError::InvalidInput(format!("alpha must be positive and finite, got {alpha}")));
        }
        let c = 2.0 * x.n() as f64 * alpha;
        let v = x.svd().v();
        let v1: Vec<f64> = (0..x.rank()).map(|j| v[(0, j)]).collect();
        let denom: f64 = v1
            .iter()
            .zip(x.svd().d())
            .map(|(vj, dj)| vj * vj * dj * dj / (dj * dj + c))
            .sum();
        if denom.abs() <= 1e-12 {
            return Err(FvsError::Numerical(format!(
                "penalized Gram matrix is numerically singular (downdate denominator {denom:.3e})"
            )));
        }
        Ok(Self { x, c, v1, denom })
    }

    /// The penalty multiplier `c = 2nα`.
    pub fn penalty(&self) -> f64 {
        self.c
    }

    /// `R⁻¹ b` where `R = X'X + cI`.
    fn ridge_solve(&self, b: &[f64]) -> Vec<f64> {
        let v = self.x.svd().v();
        let d = self.x.svd().d();
        let vb = mat_t_vec(v, b);
        let inside = mat_vec(v, &vb);
        let scaled: Vec<f64> = vb.iter().zip(d).map(|(w, dj)| w / (dj * dj + self.c)).collect();
        let mut out = mat_vec(v, &scaled);
        for ((o, bi), pi) in out.iter_mut().zip(b).zip(&inside) {
            *o += (bi - pi) / self.c;
        }
        out
    }

    /// `A⁻¹ b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let p = self.x.p();
        if b.len() != p {
            return Err(FvsError::Dimension(format!("right-hand side of length {} against p = {p}", b.len())));
        }
        check_finite("b", b)?;
        let rb = self.ridge_solve(b);
        let mut e1 = vec![0.0; p];
        e1[0] = 1.0;
        let re1 = self.ridge_solve(&e1);
        let scale = self.c * rb[0] / self.denom;
        Ok(rb.iter().zip(&re1).map(|(a, e)| a + scale * e).collect())
    }

    /// `K y`.
    pub fn apply(&self, y: &[f64]) -> Result<Vec<f64>> {
        let svd = self.x.svd();
        if y.len() != svd.nrows() {
            return Err(FvsError::Dimension(format!("vector of length {} against n = {}", y.len(), svd.nrows())));
        }
        check_finite("y", y)?;
        let uy = mat_t_vec(svd.u(), y);
        let d = svd.d();
        // X'y = V w with w = d ∘ U'y, which has no component outside the row space.
        let e1_rb: f64 = self
            .v1
            .iter()
            .zip(d)
            .zip(&uy)
            .map(|((vj, dj), uj)| vj * dj * uj / (dj * dj + self.c))
            .sum();
        let scale = self.c * e1_rb / self.denom;
        let coef: Vec<f64> = d
            .iter()
            .zip(&uy)
            .zip(&self.v1)
            .map(|((dj, uj), vj)| {
                let s = dj * dj + self.c;
                dj * dj / s * uj + scale * dj * vj / s
            })
            .collect();
        Ok(mat_vec(svd.u(), &coef))
    }

    /// `tr(K)`.
    pub fn trace(&self) -> f64 {
        let d = self.x.svd().d();
        let base: f64 = d.iter().map(|dj| dj * dj / (dj * dj + self.c)).sum();
        let extra: f64 = d
            .iter()
            .zip(&self.v1)
            .map(|(dj, vj)| {
                let t = dj * vj / (dj * dj + self.c);
                t * t
            })
            .sum();
        base + self.c * extra / self.denom
    }
}

/// Builds a column-major matrix from row-major rows.
pub fn mat_from_rows(rows: &[Vec<f64>]) -> Result<Mat<f64>> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != p) {
        return Err(FvsError::Dimension(format!("row {i} has {} entries, expected {p}", rows[i].len())));
    }
    Ok(Mat::from_fn(n, p, |i, j| rows[i][j]))
}

/// `A x`.
pub fn mat_vec(a: MatRef<'_, f64>, x: &[f64]) -> Vec<f64> {
    let r: Col<f64> = a * ColRef::from_slice(x);
    col_to_vec(r.as_ref())
}

/// `A' x`.
pub fn mat_t_vec(a: MatRef<'_, f64>, x: &[f64]) -> Vec<f64> {
    let r: Col<f64> = a.transpose() * ColRef::from_slice(x);
    col_to_vec(r.as_ref())
}

pub(crate) fn col_to_vec(c: ColRef<'_, f64>) -> Vec<f64> {
    (0..c.nrows()).map(|i| c[i]).collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn mean(a: &[f64]) -> f64 {
    a.iter().sum::<f64>() / a.len() as f64
}

/// `‖y − ȳ1‖²`.
pub(crate) fn centered_ss(y: &[f64]) -> f64 {
    let m = mean(y);
    y.iter().map(|v| (v - m) * (v - m)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(rows: &[[f64; 3]]) -> DesignMatrix {
        DesignMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn projector_reproduces_fitted_line() {
        let x = design(&[[1.0, 0.0, 0.0], [1.0, 1.0, 1.0], [1.0, 2.0, 4.0], [1.0, 3.0, 9.0], [1.0, 4.0, 16.0]]);
        assert_eq!(x.rank(), 3);
        let y: Vec<f64> = (0..5).map(|i| 2.0 - 0.5 * i as f64 + 0.25 * (i * i) as f64).collect();
        let py = x.project(&y).unwrap();
        for (a, b) in py.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
        let b = x.pinv_apply(&y).unwrap();
        assert!((b[0] - 2.0).abs() < 1e-12 && (b[1] + 0.5).abs() < 1e-12 && (b[2] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn duplicated_column_drops_rank_and_splits_coefficient() {
        let x = design(&[[1.0, 1.0, 1.0], [1.0, 2.0, 2.0], [1.0, 3.0, 3.0], [1.0, 5.0, 5.0]]);
        assert_eq!(x.rank(), 2);
        let y = [1.0, 3.0, 5.0, 9.0];
        let b = x.pinv_apply(&y).unwrap();
        assert!((b[1] - b[2]).abs() < 1e-12);
        assert!((b[1] + b[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn wide_design_interpolates() {
        let rows = vec![vec![1.0, 0.3, -1.2, 0.5], vec![1.0, 2.0, 0.1, -0.7], vec![1.0, -0.4, 0.9, 1.1]];
        let x = DesignMatrix::from_rows(&rows).unwrap();
        assert_eq!(x.rank(), 3);
        let y = [0.5, -1.0, 2.0];
        let py = x.project(&y).unwrap();
        for (a, b) in py.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_missing_intercept() {
        let rows = vec![vec![1.0, 2.0], vec![0.5, 1.0]];
        assert!(matches!(DesignMatrix::from_rows(&rows), Err(FvsError::InvalidInput(_))));
        let data = mat_from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(DesignMatrix::spanning_intercept(data), Err(FvsError::Rank(_))));
    }

    #[test]
    fn rejects_non_finite_entries() {
        let rows = vec![vec![1.0, f64::NAN], vec![1.0, 1.0]];
        assert!(DesignMatrix::from_rows(&rows).is_err());
    }

    #[test]
    fn gram_schmidt_flags_dependent_column() {
        let a = mat_from_rows(&[vec![1.0, 2.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 2.0, 1.0]]).unwrap();
        assert_eq!(gram_schmidt(a.as_ref()), Err(FvsError::Singular { column: 1 }));
    }

    #[test]
    fn gram_schmidt_is_orthonormal() {
        let a = mat_from_rows(&[vec![2.0, 1.0, 0.5], vec![0.1, 3.0, 1.0], vec![1.0, -1.0, 4.0]]).unwrap();
        let q = gram_schmidt(a.as_ref()).unwrap();
        let g = q.transpose() * &q;
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - e).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn penalized_gram_rejects_bad_alpha() {
        let x = design(&[[1.0, 0.0, 1.0], [1.0, 1.0, 0.0], [1.0, 2.0, 2.0]]);
        assert!(PenalizedGram::new(&x, 0.0).is_err());
        assert!(PenalizedGram::new(&x, f64::NAN).is_err());
    }

    #[test]
    fn smoother_keeps_constants_and_bounds_trace() {
        let x = design(&[[1.0, 0.0, 1.0], [1.0, 1.0, 0.0], [1.0, 2.0, 2.0], [1.0, 3.0, -1.0]]);
        let k = PenalizedGram::new(&x, 0.7).unwrap();
        let k1 = k.apply(&[1.0; 4]).unwrap();
        for v in k1 {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let t = k.trace();
        assert!(t > 1.0 && t < 3.0);
    }
}
