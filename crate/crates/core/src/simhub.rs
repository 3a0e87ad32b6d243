//! Simulation scenarios, the same-X loss, and a deterministic parallel
//! replication runner for comparing estimators on identical data.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::{ColRef, Mat};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{default_lambda_grid, ols_fit, ridge_cv, ridge_path};
use crate::error::{FvsError, Result};
use crate::linalg::{
    col_to_vec, gram_schmidt, mean, projector_apply, pseudoinverse_apply, reduced_svd, DesignMatrix, RankTolerance,
};
use crate::probability::{ar1_chol, sample_gaussian_rows, sample_multinomial_categories, t_critical, RngStream};
use crate::shrinkage::{fit_fvs, fit_fvs_submodel};
use crate::tuning::{
    alpha_schedule, cv_gamma, default_cv_grid, gamma_bar, gamma_f_ratio, gamma_opt, gamma_opt_submodel,
    gamma_plugin_rep, gamma_tilde_submodel, ThresholdLevel,
};

/// AR(1) correlation of the Gaussian predictors in every generator.
pub const AR1_RHO: f64 = 0.5;

/// Which data-generating process a scenario uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Lowdim,
    Categorical,
    FullrankLowdim,
    Highdim,
    FullrankHighdim,
    Submodel,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::Lowdim => "lowdim",
            Family::Categorical => "categorical",
            Family::FullrankLowdim => "fullrank_lowdim",
            Family::Highdim => "highdim",
            Family::FullrankHighdim => "fullrank_highdim",
            Family::Submodel => "submodel",
        };
        f.write_str(s)
    }
}

/// A simulation setting. Fields that do not apply to the chosen family must be left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationScenario {
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(default = "one")]
    pub sigma: f64,
    /// Signal scale for `lowdim` and `highdim`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// Signal scales of the numeric and categorical blocks for `categorical`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_f: Option<f64>,
    /// 1 for the original parametrization, 2 for the transformed one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coding: Option<u8>,
    /// Coefficient magnitude exponent for `fullrank_lowdim`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<f64>,
    /// Explicit coefficient magnitude interval for the full-rank families.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_range: Option<[f64; 2]>,
    /// Bernoulli inclusion probability for the full-rank families.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    /// Submodel size and signal ratios for `submodel`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "fifty")]
    pub replications: usize,
    /// Estimator names to run; the CLI uses a family-specific default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimators: Option<Vec<String>>,
}

fn one() -> f64 {
    1.0
}

fn fifty() -> usize {
    50
}

impl SimulationScenario {
    fn base(family: Family) -> Self {
        Self {
            family,
            n: None,
            p: None,
            sigma: 1.0,
            tau: None,
            tau_c: None,
            tau_f: None,
            coding: None,
            psi: None,
            u_range: None,
            s: None,
            p0: None,
            r1: None,
            r2: None,
            seed: 0,
            replications: 50,
            estimators: None,
        }
    }

    pub fn lowdim(n: usize, p: usize, tau: f64, sigma: f64) -> Self {
        Self { n: Some(n), p: Some(p), tau: Some(tau), sigma, ..Self::base(Family::Lowdim) }
    }

    pub fn highdim(n: usize, p: usize, tau: f64, sigma: f64) -> Self {
        Self { n: Some(n), p: Some(p), tau: Some(tau), sigma, ..Self::base(Family::Highdim) }
    }

    pub fn categorical(tau_c: f64, tau_f: f64, coding: u8) -> Self {
        Self { tau_c: Some(tau_c), tau_f: Some(tau_f), coding: Some(coding), ..Self::base(Family::Categorical) }
    }

    pub fn fullrank_lowdim(n: usize, p: usize, psi: f64, s: f64, coding: u8) -> Self {
        Self {
            n: Some(n),
            p: Some(p),
            psi: Some(psi),
            s: Some(s),
            coding: Some(coding),
            ..Self::base(Family::FullrankLowdim)
        }
    }

    pub fn fullrank_highdim(n: usize, p: usize, s: f64, sigma: f64, coding: u8) -> Self {
        Self { n: Some(n), p: Some(p), s: Some(s), sigma, coding: Some(coding), ..Self::base(Family::FullrankHighdim) }
    }

    pub fn submodel(p0: usize, r1: f64, r2: f64) -> Self {
        Self { p0: Some(p0), r1: Some(r1), r2: Some(r2), ..Self::base(Family::Submodel) }
    }

    pub fn with_replications(mut self, replications: usize) -> Self {
        self.replications = replications;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_estimators(mut self, names: &[&str]) -> Self {
        self.estimators = Some(names.iter().map(|s| s.to_string()).collect());
        self
    }

    /// `(n, p)` after applying the family defaults.
    pub fn shape(&self) -> (usize, usize) {
        let (dn, dp) = match self.family {
            Family::Lowdim => (300, 75),
            Family::Categorical => (100, CATEGORICAL_P),
            Family::FullrankLowdim => (300, 150),
            Family::Highdim | Family::FullrankHighdim => (200, 300),
            Family::Submodel => (100, 75),
        };
        (self.n.unwrap_or(dn), self.p.unwrap_or(dp))
    }

    pub fn coding(&self) -> u8 {
        self.coding.unwrap_or(1)
    }

    /// A compact label used in report rows.
    pub fn label(&self) -> String {
        let (n, p) = self.shape();
        let mut parts = vec![format!("n={n}"), format!("p={p}"), format!("sigma={}", self.sigma)];
        let opt = |name: &str, v: Option<f64>| v.map(|v| format!("{name}={v}"));
        parts.extend(opt("tau", self.tau));
        parts.extend(opt("tau_c", self.tau_c));
        parts.extend(opt("tau_f", self.tau_f));
        parts.extend(opt("psi", self.psi));
        parts.extend(opt("s", self.s));
        parts.extend(self.p0.map(|v| format!("p0={v}")));
        parts.extend(opt("r1", self.r1));
        parts.extend(opt("r2", self.r2));
        parts.extend(self.coding.map(|v| format!("coding={v}")));
        format!("{}({})", self.family, parts.join(";"))
    }

    /// Checks the scenario and returns warnings for settings outside the documented ranges.
    pub fn validate(&self) -> Result<Vec<String>> {
        let bad = |m: String| Err(FvsError::InvalidInput(m));
        let (n, p) = self.shape();
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if n < 3 || p < 2 {
            return bad(format!("need n >= 3 and p >= 2, got n = {n}, p = {p}"));
        }
        let mut warnings = Vec::new();
        let mut extrapolated = |what: String| warnings.push(format!("extrapolated: {what}"));
        let nonneg = |name: &str, v: Option<f64>| -> Result<f64> {
            match v {
                Some(v) if v.is_finite() && v >= 0.0 => Ok(v),
                Some(v) => Err(FvsError::InvalidInput(format!("{name} must be a nonnegative number, got {v}"))),
                None => Err(FvsError::InvalidInput(format!("{name} is required for family {}", self.family))),
            }
        };
        let forbid = |name: &str, present: bool| -> Result<()> {
            if present {
                Err(FvsError::InvalidInput(format!("{name} does not apply to family {}", self.family)))
            } else {
                Ok(())
            }
        };
        let coding = self.coding();
        if coding != 1 && coding != 2 {
            return bad(format!("coding must be 1 or 2, got {coding}"));
        }
        match self.family {
            Family::Lowdim | Family::Highdim => {
                let tau = nonneg("tau", self.tau)?;
                forbid("tau_c/tau_f", self.tau_c.is_some() || self.tau_f.is_some())?;
                forbid("psi/s/u_range", self.psi.is_some() || self.s.is_some() || self.u_range.is_some())?;
                forbid("p0/r1/r2", self.p0.is_some() || self.r1.is_some() || self.r2.is_some())?;
                forbid("coding", self.coding.is_some())?;
                if tau > 100.0 {
                    extrapolated(format!("tau = {tau} above 100"));
                }
                if self.family == Family::Lowdim && n <= p {
                    extrapolated(format!("lowdim with n = {n} <= p = {p}"));
                }
                if self.family == Family::Highdim && n >= p {
                    extrapolated(format!("highdim with n = {n} >= p = {p}"));
                }
            }
            Family::Categorical => {
                nonneg("tau_c", self.tau_c)?;
                nonneg("tau_f", self.tau_f)?;
                forbid("tau", self.tau.is_some())?;
                forbid("psi/s/u_range", self.psi.is_some() || self.s.is_some() || self.u_range.is_some())?;
                forbid("p0/r1/r2", self.p0.is_some() || self.r1.is_some() || self.r2.is_some())?;
                if p != CATEGORICAL_P {
                    return bad(format!("categorical designs have exactly {CATEGORICAL_P} columns, got p = {p}"));
                }
                if n <= p {
                    return bad(format!("categorical family needs n > {CATEGORICAL_P}, got {n}"));
                }
                if n != 100 {
                    extrapolated(format!("categorical with n = {n} instead of 100"));
                }
            }
            Family::FullrankLowdim | Family::FullrankHighdim => {
                let s = nonneg("s", self.s)?;
                if s > 1.0 {
                    return bad(format!("s is a probability, got {s}"));
                }
                forbid("tau/tau_c/tau_f", self.tau.is_some() || self.tau_c.is_some() || self.tau_f.is_some())?;
                forbid("p0/r1/r2", self.p0.is_some() || self.r1.is_some() || self.r2.is_some())?;
                self.u_interval()?;
                if s > 0.3 {
                    extrapolated(format!("s = {s} above 0.3"));
                }
                if self.family == Family::FullrankLowdim && n <= p {
                    extrapolated(format!("fullrank_lowdim with n = {n} <= p = {p}"));
                }
            }
            Family::Submodel => {
                forbid("tau/tau_c/tau_f", self.tau.is_some() || self.tau_c.is_some() || self.tau_f.is_some())?;
                forbid("psi/s/u_range", self.psi.is_some() || self.s.is_some() || self.u_range.is_some())?;
                forbid("coding", self.coding.is_some())?;
                let p0 = self.p0.ok_or_else(|| FvsError::InvalidInput("p0 is required for family submodel".into()))?;
                let r1 = nonneg("r1", self.r1)?;
                let r2 = nonneg("r2", self.r2)?;
                if p0 < 2 || p0 >= p {
                    return bad(format!("need 2 <= p0 < p, got p0 = {p0}, p = {p}"));
                }
                if !(r1 > 0.0 && r2 > r1) {
                    return bad(format!("need r2 > r1 > 0, got r1 = {r1}, r2 = {r2}"));
                }
                if n <= p {
                    extrapolated(format!("submodel with n = {n} <= p = {p}"));
                }
                if p0 > 25 {
                    extrapolated(format!("p0 = {p0} above 25"));
                }
            }
        }
        Ok(warnings)
    }

    /// Interval of the coefficient magnitudes for the full-rank families.
    fn u_interval(&self) -> Result<(f64, f64)> {
        let (lo, hi) = if let Some([lo, hi]) = self.u_range {
            (lo, hi)
        } else {
            match self.family {
                Family::FullrankLowdim => {
                    let psi = self.psi.unwrap_or(0.0);
                    (2f64.powf(-psi - 1.0), 2f64.powf(-psi))
                }
                Family::FullrankHighdim if self.psi.is_some() => {
                    return Err(FvsError::InvalidInput("use u_range instead of psi for fullrank_highdim".into()))
                }
                Family::FullrankHighdim if self.sigma == 1.0 => (0.25, 0.5),
                Family::FullrankHighdim if self.sigma == 3.0 => (1.0 / 6.0, 1.0 / 3.0),
                Family::FullrankHighdim => {
                    return Err(FvsError::InvalidInput(
                        "fullrank_highdim needs u_range unless sigma is 1 or 3".into(),
                    ))
                }
                _ => return Err(FvsError::InvalidInput("coefficient interval only applies to full-rank families".into())),
            }
        };
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo < hi) {
            return Err(FvsError::InvalidInput(format!("invalid coefficient interval ({lo}, {hi})")));
        }
        Ok((lo, hi))
    }
}

/// One simulated data set together with the quantities the oracle needs.
#[derive(Debug, Clone)]
pub struct GeneratedInstance {
    pub x: DesignMatrix,
    pub beta: Vec<f64>,
    /// `X β`.
    pub mu: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma: f64,
    /// `‖μ − P₁μ‖²`.
    pub delta2: f64,
    pub gamma_opt: f64,
    /// Submodel columns, for scenarios that define one.
    pub submodel: Option<Vec<usize>>,
    /// `‖μ − P_{X₀}μ‖²`.
    pub delta2_submodel: Option<f64>,
    pub gamma_opt_submodel: Option<f64>,
}

impl GeneratedInstance {
    fn assemble(x: DesignMatrix, beta: Vec<f64>, mu: Vec<f64>, sigma: f64, rng: &mut RngStream) -> Result<Self> {
        let y: Vec<f64> = mu.iter().map(|m| m + sigma * rng.standard_normal()).collect();
        let m = mean(&mu);
        let delta2 = mu.iter().map(|v| (v - m) * (v - m)).sum();
        let gamma_opt = gamma_opt(delta2, sigma * sigma, x.rank())?;
        Ok(Self { x, beta, mu, y, sigma, delta2, gamma_opt, submodel: None, delta2_submodel: None, gamma_opt_submodel: None })
    }

    /// A fresh response `μ + σε` for the same design and coefficients.
    pub fn redraw_noise(&self, rng: &mut RngStream) -> Vec<f64> {
        self.mu.iter().map(|m| m + self.sigma * rng.standard_normal()).collect()
    }

    /// The same data under the design `X T`, with coefficients `T⁻¹β`.
    pub fn reparametrize(&self, t: &Mat<f64>) -> Result<Self> {
        let p = self.x.p();
        if t.nrows() != p || t.ncols() != p {
            return Err(FvsError::Dimension(format!("transform must be {p}x{p}")));
        }
        let lu = t.partial_piv_lu();
        let sol = lu.solve(ColRef::from_slice(&self.beta));
        let beta = col_to_vec(sol.as_ref());
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(FvsError::Singular { column: 0 });
        }
        let x = self.x.transform(t.as_ref())?;
        Ok(Self { x, beta, ..self.clone() })
    }
}

/// A uniformly random `p × p` orthogonal matrix: Gram–Schmidt applied to i.i.d. normal entries.
pub fn random_rotation(p: usize, rng: &mut RngStream) -> Result<Mat<f64>> {
    let mut a = Mat::<f64>::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            a[(i, j)] = rng.standard_normal();
        }
    }
    gram_schmidt(a.as_ref())
}

fn with_intercept(block: &Mat<f64>) -> Mat<f64> {
    Mat::from_fn(block.nrows(), block.ncols() + 1, |i, j| if j == 0 { 1.0 } else { block[(i, j - 1)] })
}

fn ar1_block(rng: &mut RngStream, n: usize, k: usize) -> Result<Mat<f64>> {
    sample_gaussian_rows(rng, n, ar1_chol(k, AR1_RHO)?.as_ref())
}

/// Intercept plus AR(1) Gaussian predictors, `β = X⁻(1 + τZ)` with `Z ~ N_n(0, I)`.
pub fn gen_lowdim(n: usize, p: usize, tau: f64, sigma: f64, rng: &mut RngStream) -> Result<GeneratedInstance> {
    if p < 2 || n < 2 {
        return Err(FvsError::InvalidInput(format!("need n, p >= 2, got n = {n}, p = {p}")));
    }
    let x = DesignMatrix::new(with_intercept(&ar1_block(rng, n, p - 1)?))?;
    let z = rng.standard_normals(n);
    let target: Vec<f64> = z.iter().map(|zi| 1.0 + tau * zi).collect();
    let beta = x.pinv_apply(&target)?;
    let mu = x.apply(&beta)?;
    GeneratedInstance::assemble(x, beta, mu, sigma, rng)
}

/// Same construction as [`gen_lowdim`], intended for `p > n`.
pub fn gen_highdim(n: usize, p: usize, tau: f64, sigma: f64, rng: &mut RngStream) -> Result<GeneratedInstance> {
    gen_lowdim(n, p, tau, sigma, rng)
}

/// Intercept plus AR(1) predictors with sparse coefficients `β = u ∘ v`,
/// `u_j ~ U(lo, hi)`, `v = (1, Ber(s), …, Ber(s))`.
pub fn gen_fullrank(
    n: usize,
    p: usize,
    u_range: (f64, f64),
    s: f64,
    sigma: f64,
    rng: &mut RngStream,
) -> Result<GeneratedInstance> {
    if p < 2 || n < 2 {
        return Err(FvsError::InvalidInput(format!("need n, p >= 2, got n = {n}, p = {p}")));
    }
    let x = DesignMatrix::new(with_intercept(&ar1_block(rng, n, p - 1)?))?;
    let u: Vec<f64> = (0..p).map(|_| rng.uniform(u_range.0, u_range.1)).collect();
    let beta: Vec<f64> = u
        .iter()
        .enumerate()
        .map(|(j, uj)| if j == 0 || rng.bernoulli(s) { *uj } else { 0.0 })
        .collect();
    let mu = x.apply(&beta)?;
    GeneratedInstance::assemble(x, beta, mu, sigma, rng)
}

/// Replaces the design by `X T` for a random orthogonal `T`; `μ` and `y` are unchanged.
pub fn gen_fullrank_transform(base: &GeneratedInstance, rng: &mut RngStream) -> Result<GeneratedInstance> {
    let t = random_rotation(base.x.p(), rng)?;
    base.reparametrize(&t)
}

/// Number of columns of the categorical design.
pub const CATEGORICAL_P: usize = 50;
const NUMERIC: usize = 25;
const LEVELS: usize = 5;
const FACTORS: usize = 3;
/// Zero-based reference levels of the three factors in the second coding.
pub const CODING2_REFERENCES: [usize; 3] = [1, 2, 4];
const MASK: [f64; 12] = [1.0, 2.0, 0.0, 0.0, 0.0, 2.0, 1.0, 0.0, 0.0, 0.0, 2.0, 1.0];

fn main_col(factor: usize, slot: usize) -> usize {
    1 + NUMERIC + factor * (LEVELS - 1) + slot
}

fn interaction_col(factor: usize, slot: usize) -> usize {
    1 + NUMERIC + FACTORS * (LEVELS - 1) + factor * (LEVELS - 1) + slot
}

/// The recoding matrix `T` with `X_new = X T` when the factors switch from reference
/// level 0 to the given zero-based reference levels.
///
/// The new indicator for the old reference level is `base − Σ other indicators`, where
/// `base` is the intercept for main effects and the 25th numeric predictor for interactions.
pub fn categorical_recoding(references: [usize; 3]) -> Result<Mat<f64>> {
    let mut t = Mat::<f64>::identity(CATEGORICAL_P, CATEGORICAL_P);
    for (factor, &r) in references.iter().enumerate() {
        if r >= LEVELS {
            return Err(FvsError::InvalidInput(format!("reference level {r} out of range")));
        }
        let levels: Vec<usize> = (0..LEVELS).filter(|&l| l != r).collect();
        for (slot, &level) in levels.iter().enumerate() {
            for (col_of, base) in [(main_col as fn(usize, usize) -> usize, 0), (interaction_col, NUMERIC)] {
                let new = col_of(factor, slot);
                for row in 0..CATEGORICAL_P {
                    t[(row, new)] = 0.0;
                }
                if level == 0 {
                    t[(base, new)] = 1.0;
                    for old_slot in 0..LEVELS - 1 {
                        t[(col_of(factor, old_slot), new)] = -1.0;
                    }
                } else {
                    t[(col_of(factor, level - 1), new)] = 1.0;
                }
            }
        }
    }
    Ok(t)
}

/// 25 AR(1) numeric predictors, three five-level factors with reference level 0, and
/// interactions of the 25th numeric predictor with each factor.
pub fn gen_categorical(
    n: usize,
    tau_c: f64,
    tau_f: f64,
    coding: u8,
    sigma: f64,
    rng: &mut RngStream,
) -> Result<GeneratedInstance> {
    if coding != 1 && coding != 2 {
        return Err(FvsError::InvalidInput(format!("coding must be 1 or 2, got {coding}")));
    }
    const ATTEMPTS: u64 = 10;
    for attempt in 0..ATTEMPTS {
        let mut sub = rng.substream(attempt);
        if let Some(inst) = try_categorical(n, tau_c, tau_f, sigma, &mut sub)? {
            return if coding == 2 { inst.reparametrize(&categorical_recoding(CODING2_REFERENCES)?) } else { Ok(inst) };
        }
    }
    Err(FvsError::Infeasible(format!(
        "categorical design was rank deficient in {ATTEMPTS} consecutive draws"
    )))
}

fn try_categorical(n: usize, tau_c: f64, tau_f: f64, sigma: f64, rng: &mut RngStream) -> Result<Option<GeneratedInstance>> {
    let numeric = ar1_block(rng, n, NUMERIC)?;
    let mut factors = Vec::with_capacity(FACTORS);
    for _ in 0..FACTORS {
        let labels = sample_multinomial_categories(rng, n, &[1.0 / LEVELS as f64; LEVELS])?;
        if (0..LEVELS).any(|l| !labels.contains(&l)) {
            return Ok(None);
        }
        factors.push(labels);
    }
    let mut data = Mat::<f64>::zeros(n, CATEGORICAL_P);
    for i in 0..n {
        data[(i, 0)] = 1.0;
        for j in 0..NUMERIC {
            data[(i, 1 + j)] = numeric[(i, j)];
        }
        for (f, labels) in factors.iter().enumerate() {
            if labels[i] > 0 {
                data[(i, main_col(f, labels[i] - 1))] = 1.0;
                data[(i, interaction_col(f, labels[i] - 1))] = numeric[(i, NUMERIC - 1)];
            }
        }
    }
    let x = DesignMatrix::new(data)?;
    if x.rank() < CATEGORICAL_P {
        return Ok(None);
    }
    let xc = x.select_columns(&(0..=NUMERIC).collect::<Vec<_>>())?;
    let zc = rng.standard_normals(n);
    let target: Vec<f64> = zc.iter().map(|z| 1.0 + tau_c * z).collect();
    let beta_c = xc.pinv_apply(&target)?;
    let xf = ar1_block(rng, n, CATEGORICAL_P - NUMERIC - 1)?;
    let xf_svd = reduced_svd(xf.as_ref(), RankTolerance::Default)?;
    let zf: Vec<f64> = rng.standard_normals(n).into_iter().map(|z| tau_f * z).collect();
    let raw_f = pseudoinverse_apply(&xf_svd, &zf)?;
    let beta: Vec<f64> = beta_c
        .into_iter()
        .chain(raw_f.iter().enumerate().map(|(j, b)| b * MASK[j % MASK.len()]))
        .collect();
    let mu = x.apply(&beta)?;
    GeneratedInstance::assemble(x, beta, mu, sigma, rng).map(Some)
}

/// Submodel setting: `X = (X₀, X₁*)` with `X₁* = (I − P_{X₀})X₁`, and signal split so that
/// `‖μ − P_{X₀}μ‖² = R₁(r − r₀)` and `‖μ − P₁μ‖² = R₂(r − 1)`.
pub fn gen_submodel_sim(
    n: usize,
    p: usize,
    p0: usize,
    r1: f64,
    r2: f64,
    sigma: f64,
    rng: &mut RngStream,
) -> Result<GeneratedInstance> {
    if p0 < 2 || p0 >= p {
        return Err(FvsError::InvalidInput(format!("need 2 <= p0 < p, got p0 = {p0}, p = {p}")));
    }
    if !(r1 > 0.0 && r2 > r1) {
        return Err(FvsError::InvalidInput(format!("need r2 > r1 > 0, got r1 = {r1}, r2 = {r2}")));
    }
    let raw = with_intercept(&ar1_block(rng, n, p - 1)?);
    let x0 = DesignMatrix::new(raw.as_ref().subcols(0, p0).to_owned())?;
    let mut x1 = raw.as_ref().subcols(p0, p - p0).to_owned();
    for j in 0..x1.ncols() {
        let col = col_to_vec(x1.col(j));
        let proj = x0.project(&col)?;
        for i in 0..n {
            x1[(i, j)] = col[i] - proj[i];
        }
    }
    let x = DesignMatrix::new(Mat::from_fn(n, p, |i, j| if j < p0 { raw[(i, j)] } else { x1[(i, j - p0)] }))?;
    let x1_svd = reduced_svd(x1.as_ref(), RankTolerance::Default)?;
    let (r, r0) = (x.rank(), x0.rank());
    if r <= r0 {
        return Err(FvsError::Infeasible("submodel spans the full design".into()));
    }

    let z = rng.standard_normals(n);
    let z1 = rng.standard_normals(n);
    let pz1 = projector_apply(&x1_svd, &z1)?;
    let tau1 = (r1 * (r - r0) as f64 / pz1.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let p0z = x0.project(&z)?;
    let zbar = mean(&z);
    let n0: f64 = p0z.iter().map(|v| (v - zbar) * (v - zbar)).sum();
    let excess = r2 * (r - 1) as f64 - r1 * (r - r0) as f64;
    if excess <= 0.0 {
        return Err(FvsError::Infeasible(format!(
            "R2 (rank - 1) = {} does not exceed R1 (rank - rank0) = {}",
            r2 * (r - 1) as f64,
            r1 * (r - r0) as f64
        )));
    }
    let tau0 = (excess / n0).sqrt();
    let target0: Vec<f64> = z.iter().map(|v| 1.0 + tau0 * v).collect();
    let beta0 = x0.pinv_apply(&target0)?;
    let scaled: Vec<f64> = z1.iter().map(|v| tau1 * v).collect();
    let beta1 = pseudoinverse_apply(&x1_svd, &scaled)?;
    let beta: Vec<f64> = beta0.into_iter().chain(beta1).collect();
    let mu = x.apply(&beta)?;
    let mut inst = GeneratedInstance::assemble(x, beta, mu, sigma, rng)?;
    let p0mu = x0.project(&inst.mu)?;
    let d2s: f64 = inst.mu.iter().zip(&p0mu).map(|(a, b)| (a - b) * (a - b)).sum();
    inst.gamma_opt_submodel = Some(gamma_opt_submodel(d2s, sigma * sigma, r, r0)?);
    inst.delta2_submodel = Some(d2s);
    inst.submodel = Some((0..p0).collect());
    Ok(inst)
}

/// Draws one instance of the scenario.
pub fn generate(scenario: &SimulationScenario, rng: &mut RngStream) -> Result<GeneratedInstance> {
    let (n, p) = scenario.shape();
    let sigma = scenario.sigma;
    let req = |name: &str, v: Option<f64>| {
        v.ok_or_else(|| FvsError::InvalidInput(format!("{name} is required for family {}", scenario.family)))
    };
    match scenario.family {
        Family::Lowdim => gen_lowdim(n, p, req("tau", scenario.tau)?, sigma, rng),
        Family::Highdim => gen_highdim(n, p, req("tau", scenario.tau)?, sigma, rng),
        Family::Categorical => gen_categorical(
            n,
            req("tau_c", scenario.tau_c)?,
            req("tau_f", scenario.tau_f)?,
            scenario.coding(),
            sigma,
            rng,
        ),
        Family::FullrankLowdim | Family::FullrankHighdim => {
            let base = gen_fullrank(n, p, scenario.u_interval()?, req("s", scenario.s)?, sigma, rng)?;
            if scenario.coding() == 2 {
                gen_fullrank_transform(&base, rng)
            } else {
                Ok(base)
            }
        }
        Family::Submodel => gen_submodel_sim(
            n,
            p,
            scenario.p0.ok_or_else(|| FvsError::InvalidInput("p0 is required for family submodel".into()))?,
            req("r1", scenario.r1)?,
            req("r2", scenario.r2)?,
            sigma,
            rng,
        ),
    }
}

/// `n⁻¹‖μ − fitted‖²`.
pub fn same_x_loss(fitted: &[f64], mu: &[f64]) -> Result<f64> {
    if fitted.len() != mu.len() || mu.is_empty() {
        return Err(FvsError::Dimension(format!("fitted has length {}, mu has length {}", fitted.len(), mu.len())));
    }
    Ok(fitted.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / mu.len() as f64)
}

type EstimatorFn = dyn Fn(&GeneratedInstance, &mut RngStream) -> Result<Vec<f64>> + Send + Sync;

/// A named procedure mapping an instance to fitted values. The stream it receives is
/// private to the estimator and the replication.
#[derive(Clone)]
pub struct Estimator {
    name: String,
    f: Arc<EstimatorFn>,
}

impl fmt::Debug for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Estimator").field("name", &self.name).finish()
    }
}

/// Folds used by the cross-validated estimators.
pub const CV_FOLDS: usize = 10;

/// Names accepted by [`Estimator::by_name`].
pub const ESTIMATOR_NAMES: &[&str] = &[
    "ols",
    "oracle",
    "f_ratio",
    "f_ratio_q90",
    "f_ratio_q95",
    "cv",
    "plugin_rep",
    "ridge_cv",
    "bar_rep1",
    "bar_corrected_rep2",
    "bar_rep3",
    "bar_rep4",
    "submodel_oracle",
    "submodel_f_ratio",
    "submodel_f_ratio_q95",
];

fn submodel_of(inst: &GeneratedInstance) -> Result<&[usize]> {
    inst.submodel
        .as_deref()
        .ok_or_else(|| FvsError::InvalidInput("scenario does not define a submodel".into()))
}

impl Estimator {
    pub fn new<F>(name: &str, f: F) -> Self
    where
        F: Fn(&GeneratedInstance, &mut RngStream) -> Result<Vec<f64>> + Send + Sync + 'static,
    {
        Self { name: name.to_string(), f: Arc::new(f) }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn evaluate(&self, inst: &GeneratedInstance, rng: &mut RngStream) -> Result<Vec<f64>> {
        (self.f)(inst, rng)
    }

    /// Shrinkage with a fixed γ.
    pub fn fixed_gamma(name: &str, gamma: f64) -> Self {
        Self::new(name, move |i, _| Ok(fit_fvs(&i.x, &i.y, gamma)?.fitted))
    }

    /// High-dimensional plug-in with `α = nᵗ / (2‖y − ȳ1‖²)`.
    pub fn bar(name: &str, t: f64, corrected: bool) -> Self {
        Self::new(name, move |i, _| {
            let alpha = alpha_schedule(t, &i.y)?;
            let g = gamma_bar(&i.x, &i.y, alpha, corrected)?.gamma;
            Ok(fit_fvs(&i.x, &i.y, g)?.fitted)
        })
    }

    /// One of the built-in estimators listed in [`ESTIMATOR_NAMES`].
    pub fn by_name(name: &str) -> Result<Self> {
        let fvs = |i: &GeneratedInstance, g: f64| Ok(fit_fvs(&i.x, &i.y, g)?.fitted);
        let e = match name {
            "ols" => Self::new(name, |i, _| Ok(ols_fit(&i.x, &i.y)?.fitted)),
            "oracle" => Self::new(name, move |i, _| fvs(i, i.gamma_opt)),
            "f_ratio" => Self::new(name, move |i, _| fvs(i, gamma_f_ratio(&i.x, &i.y, None)?.gamma)),
            "f_ratio_q90" => {
                Self::new(name, move |i, _| fvs(i, gamma_f_ratio(&i.x, &i.y, Some(ThresholdLevel::Q90))?.gamma))
            }
            "f_ratio_q95" => {
                Self::new(name, move |i, _| fvs(i, gamma_f_ratio(&i.x, &i.y, Some(ThresholdLevel::Q95))?.gamma))
            }
            "cv" => Self::new(name, move |i, rng| fvs(i, cv_gamma(&i.x, &i.y, CV_FOLDS, &default_cv_grid(), rng)?.gamma)),
            "plugin_rep" => Self::new(name, move |i, _| {
                let alpha = alpha_schedule(1.0, &i.y)?;
                fvs(i, gamma_plugin_rep(&i.x, &i.y, alpha)?.gamma)
            }),
            "ridge_cv" => Self::new(name, |i, rng| {
                Ok(ridge_cv(&i.x, &i.y, CV_FOLDS, &default_lambda_grid(), true, rng)?.fitted)
            }),
            "bar_rep1" => Self::bar(name, 1.0, false),
            "bar_corrected_rep2" => Self::bar(name, 1.5, true),
            "bar_rep3" => Self::bar(name, 2.0, false),
            "bar_rep4" => Self::bar(name, 3.0, false),
            "submodel_oracle" => Self::new(name, |i, _| {
                let g = i
                    .gamma_opt_submodel
                    .ok_or_else(|| FvsError::InvalidInput("scenario does not define a submodel".into()))?;
                Ok(fit_fvs_submodel(&i.x, submodel_of(i)?, &i.y, g)?.fitted)
            }),
            "submodel_f_ratio" => Self::new(name, |i, _| {
                let cols = submodel_of(i)?;
                let g = gamma_tilde_submodel(&i.x, cols, &i.y, None)?.gamma;
                Ok(fit_fvs_submodel(&i.x, cols, &i.y, g)?.fitted)
            }),
            "submodel_f_ratio_q95" => Self::new(name, |i, _| {
                let cols = submodel_of(i)?;
                let g = gamma_tilde_submodel(&i.x, cols, &i.y, Some(ThresholdLevel::Q95))?.gamma;
                Ok(fit_fvs_submodel(&i.x, cols, &i.y, g)?.fitted)
            }),
            other => {
                return Err(FvsError::InvalidInput(format!(
                    "unknown estimator '{other}'; expected one of {}",
                    ESTIMATOR_NAMES.join(", ")
                )))
            }
        };
        Ok(e)
    }

    /// The estimators run by default for a family.
    pub fn defaults_for(family: Family) -> Vec<Self> {
        let names: &[&str] = match family {
            Family::Lowdim | Family::Categorical | Family::FullrankLowdim => {
                &["ols", "oracle", "f_ratio", "f_ratio_q95", "cv", "ridge_cv"]
            }
            Family::Highdim | Family::FullrankHighdim => {
                &["oracle", "cv", "bar_rep1", "bar_corrected_rep2", "bar_rep3", "ridge_cv"]
            }
            Family::Submodel => &[
                "ols",
                "oracle",
                "submodel_oracle",
                "f_ratio",
                "submodel_f_ratio",
                "f_ratio_q95",
                "submodel_f_ratio_q95",
                "ridge_cv",
            ],
        };
        names.iter().map(|n| Self::by_name(n).expect("built-in name")).collect()
    }
}

/// FNV-1a, used to give each estimator a stream that does not depend on its position.
fn name_key(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Mean and normalized standard error of one estimator's losses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorSummary {
    pub estimator: String,
    pub mean: Option<f64>,
    /// Sample SD over √(number of observed replications); absent with fewer than two.
    pub se: Option<f64>,
    pub n_missing: usize,
}

/// Per-replication losses of every estimator on shared instances.
#[derive(Debug, Clone)]
pub struct ReplicationReport {
    pub scenario: SimulationScenario,
    pub seed: u64,
    pub estimators: Vec<String>,
    /// `losses[e][r]`: loss of estimator `e` in replication `r`, `None` when it failed.
    pub losses: Vec<Vec<Option<f64>>>,
    /// Realized `δ²` per replication.
    pub delta2: Vec<Option<f64>>,
    /// First error message per estimator, if any.
    pub errors: Vec<Option<String>>,
    pub summaries: Vec<EstimatorSummary>,
}

fn summarize(name: &str, losses: &[Option<f64>]) -> EstimatorSummary {
    let vals: Vec<f64> = losses.iter().flatten().copied().collect();
    let k = vals.len();
    let mean = (k > 0).then(|| vals.iter().sum::<f64>() / k as f64);
    let se = mean.filter(|_| k > 1).map(|m| {
        let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (k - 1) as f64;
        (var / k as f64).sqrt()
    });
    EstimatorSummary { estimator: name.to_string(), mean, se, n_missing: losses.len() - k }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

impl ReplicationReport {
    pub fn summary(&self, name: &str) -> Option<&EstimatorSummary> {
        self.summaries.iter().find(|s| s.estimator == name)
    }

    pub fn losses_of(&self, name: &str) -> Option<&[Option<f64>]> {
        self.estimators.iter().position(|e| e == name).map(|k| self.losses[k].as_slice())
    }

    pub fn n_missing(&self) -> usize {
        self.summaries.iter().map(|s| s.n_missing).sum()
    }

    /// One row per estimator: `scenario,estimator,mean,se,n_missing`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["scenario", "estimator", "mean", "se", "n_missing"])?;
        let label = self.scenario.label();
        for s in &self.summaries {
            w.write_record([label.as_str(), &s.estimator, &fmt_opt(s.mean), &fmt_opt(s.se), &s.n_missing.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// One row per (replication, estimator): `replication,estimator,loss`.
    pub fn write_replications_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["replication", "estimator", "loss"])?;
        for r in 0..self.scenario.replications {
            for (e, name) in self.estimators.iter().enumerate() {
                w.write_record([&r.to_string(), name.as_str(), &fmt_opt(self.losses[e][r])])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| FvsError::InvalidInput(format!("cannot start worker pool: {e}")))
}

/// Runs every estimator on `scenario.replications` shared instances.
///
/// Replication `r` draws its instance from stream `(seed, r)`; each estimator gets a
/// substream keyed by its name. Results are identical for any worker count.
pub fn run_replications(
    scenario: &SimulationScenario,
    estimators: &[Estimator],
    seed: u64,
    workers: usize,
) -> Result<ReplicationReport> {
    scenario.validate()?;
    if estimators.is_empty() {
        return Err(FvsError::InvalidInput("estimator set is empty".into()));
    }
    let names: Vec<String> = estimators.iter().map(|e| e.name.clone()).collect();
    if let Some(dup) = names.iter().enumerate().find(|(i, n)| names[..*i].contains(n)) {
        return Err(FvsError::InvalidInput(format!("estimator '{}' listed twice", dup.1)));
    }
    type Cell = std::result::Result<f64, String>;
    let per_rep: Vec<(Option<f64>, Vec<Cell>)> = thread_pool(workers)?.install(|| {
        (0..scenario.replications)
            .into_par_iter()
            .map(|r| {
                let base = RngStream::new(seed, r as u64);
                let mut gen_rng = base.clone();
                match generate(scenario, &mut gen_rng) {
                    Err(e) => (None, vec![Err(format!("generation failed: {e}")); estimators.len()]),
                    Ok(inst) => {
                        let cells = estimators
                            .iter()
                            .map(|est| {
                                let mut rng = base.substream(name_key(&est.name));
                                est.evaluate(&inst, &mut rng)
                                    .and_then(|f| same_x_loss(&f, &inst.mu))
                                    .and_then(|l| {
                                        if l.is_finite() {
                                            Ok(l)
                                        } else {
                                            Err(FvsError::Numerical("non-finite loss".into()))
                                        }
                                    })
                                    .map_err(|e| e.to_string())
                            })
                            .collect();
                        (Some(inst.delta2), cells)
                    }
                }
            })
            .collect()
    });
    let mut losses = vec![Vec::with_capacity(scenario.replications); estimators.len()];
    let mut errors: Vec<Option<String>> = vec![None; estimators.len()];
    let mut delta2 = Vec::with_capacity(scenario.replications);
    for (d2, cells) in per_rep {
        delta2.push(d2);
        for (e, cell) in cells.into_iter().enumerate() {
            match cell {
                Ok(l) => losses[e].push(Some(l)),
                Err(msg) => {
                    errors[e].get_or_insert(msg);
                    losses[e].push(None);
                }
            }
        }
    }
    let summaries = names.iter().zip(&losses).map(|(n, l)| summarize(n, l)).collect();
    Ok(ReplicationReport { scenario: scenario.clone(), seed, estimators: names, losses, delta2, errors, summaries })
}

/// Mean same-X loss of shrinkage with `γ = 1/(1 + λ)` and of ridge with penalty `λ`.
#[derive(Debug, Clone, Serialize)]
pub struct RiskCurve {
    pub lambdas: Vec<f64>,
    pub fvs: Vec<EstimatorSummary>,
    pub ridge: Vec<EstimatorSummary>,
}

impl RiskCurve {
    /// Columns `lambda,fvs_mean,fvs_se,ridge_mean,ridge_se`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["lambda", "fvs_mean", "fvs_se", "ridge_mean", "ridge_se"])?;
        for ((l, f), r) in self.lambdas.iter().zip(&self.fvs).zip(&self.ridge) {
            w.write_record([format!("{l:e}"), fmt_opt(f.mean), fmt_opt(f.se), fmt_opt(r.mean), fmt_opt(r.se)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Smallest mean loss on the grid for shrinkage and for ridge.
    pub fn minima(&self) -> (f64, f64) {
        let min = |v: &[EstimatorSummary]| v.iter().filter_map(|s| s.mean).fold(f64::INFINITY, f64::min);
        (min(&self.fvs), min(&self.ridge))
    }
}

/// Average loss curves over the λ grid; ridge uses the standardized intercept-free penalty.
pub fn risk_curve(scenario: &SimulationScenario, lambdas: &[f64], seed: u64, workers: usize) -> Result<RiskCurve> {
    scenario.validate()?;
    if lambdas.is_empty() || lambdas.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(FvsError::InvalidInput("lambda grid must be positive".into()));
    }
    let per_rep: Vec<Result<(Vec<f64>, Vec<f64>)>> = thread_pool(workers)?.install(|| {
        (0..scenario.replications)
            .into_par_iter()
            .map(|r| {
                let mut rng = RngStream::new(seed, r as u64);
                let inst = generate(scenario, &mut rng)?;
                let py = inst.x.project(&inst.y)?;
                let ybar = mean(&inst.y);
                let fvs = lambdas
                    .iter()
                    .map(|l| {
                        let g = 1.0 / (1.0 + l);
                        let f: Vec<f64> = py.iter().map(|v| g * v + (1.0 - g) * ybar).collect();
                        same_x_loss(&f, &inst.mu)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let path = ridge_path(&inst.x, &inst.y, lambdas, true)?;
                let ridge = path.fitted.iter().map(|f| same_x_loss(f, &inst.mu)).collect::<Result<Vec<_>>>()?;
                Ok((fvs, ridge))
            })
            .collect()
    });
    let mut fvs = vec![Vec::with_capacity(scenario.replications); lambdas.len()];
    let mut ridge = vec![Vec::with_capacity(scenario.replications); lambdas.len()];
    for rep in per_rep {
        match rep {
            Ok((f, r)) => {
                for k in 0..lambdas.len() {
                    fvs[k].push(Some(f[k]));
                    ridge[k].push(Some(r[k]));
                }
            }
            Err(_) => {
                fvs.iter_mut().chain(ridge.iter_mut()).for_each(|v| v.push(None));
            }
        }
    }
    Ok(RiskCurve {
        lambdas: lambdas.to_vec(),
        fvs: fvs.iter().map(|l| summarize("fvs", l)).collect(),
        ridge: ridge.iter().map(|l| summarize("ridge", l)).collect(),
    })
}

/// Paired-t 95% confidence interval for the mean loss difference `a − b`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedInterval {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub se: f64,
    pub pairs: usize,
    /// The differences are all equal, so the interval has zero width.
    pub degenerate: bool,
}

/// Paired-t interval over the replications where both estimators produced a loss.
pub fn paired_interval(report: &ReplicationReport, a: &str, b: &str) -> Result<PairedInterval> {
    let la = report
        .losses_of(a)
        .ok_or_else(|| FvsError::InvalidInput(format!("estimator '{a}' is not in the report")))?;
    let lb = report
        .losses_of(b)
        .ok_or_else(|| FvsError::InvalidInput(format!("estimator '{b}' is not in the report")))?;
    let diffs: Vec<f64> = la.iter().zip(lb).filter_map(|(x, y)| Some((*x)? - (*y)?)).collect();
    paired_interval_from_differences(&diffs)
}

/// Paired-t 95% confidence interval from per-replication differences.
pub fn paired_interval_from_differences(diffs: &[f64]) -> Result<PairedInterval> {
    let k = diffs.len();
    if k < 2 {
        return Err(FvsError::InvalidInput(format!("paired interval needs at least 2 pairs, got {k}")));
    }
    let m = mean(diffs);
    let var = diffs.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / (k - 1) as f64;
    let se = (var / k as f64).sqrt();
    let half = t_critical(0.05, (k - 1) as f64)? * se;
    Ok(PairedInterval { mean: m, lower: m - half, upper: m + half, se, pairs: k, degenerate: se == 0.0 })
}

/// Fitted-value discrepancies between two parametrizations of the same column space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceReport {
    /// Largest absolute fitted-value difference over the γ values tried.
    pub fvs_max_abs: f64,
    /// Largest absolute ridge fitted-value difference.
    pub ridge_max_abs: f64,
    /// `‖ridge₁ − ridge₂‖ / ‖ridge₁‖`.
    pub ridge_relative: f64,
    /// `max_i |y_i|`, the scale used for the shrinkage tolerance.
    pub scale: f64,
}

/// Compares shrinkage and ridge fitted values on two designs with the same column space.
pub fn invariance_check(
    x1: &DesignMatrix,
    x2: &DesignMatrix,
    y: &[f64],
    gammas: &[f64],
    ridge_lambda: f64,
) -> Result<InvarianceReport> {
    let mut fvs_max_abs: f64 = 0.0;
    for &g in gammas {
        let f1 = fit_fvs(x1, y, g)?.fitted;
        let f2 = fit_fvs(x2, y, g)?.fitted;
        fvs_max_abs = f1.iter().zip(&f2).map(|(a, b)| (a - b).abs()).fold(fvs_max_abs, f64::max);
    }
    let r1 = ridge_path(x1, y, &[ridge_lambda], true)?.fitted.remove(0);
    let r2 = ridge_path(x2, y, &[ridge_lambda], true)?.fitted.remove(0);
    let ridge_max_abs = r1.iter().zip(&r2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let diff = r1.iter().zip(&r2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let base = r1.iter().map(|a| a * a).sum::<f64>().sqrt();
    let scale = y.iter().map(|v| v.abs()).fold(0.0, f64::max);
    Ok(InvarianceReport { fvs_max_abs, ridge_max_abs, ridge_relative: diff / base.max(f64::MIN_POSITIVE), scale })
}
