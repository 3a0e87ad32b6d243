//! Reproducible random streams, the samplers used by the simulation
//! generators, and the central F distribution.

use faer::{Mat, MatRef};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use statrs::function::beta::{checked_beta_reg, ln_beta};

use crate::error::{FvsError, Result};

/// A ChaCha20 generator addressed by `(seed, stream_id)`.
///
/// Streams with different ids are independent, and [`RngStream::substream`]
/// derives further streams deterministically so that each replication and each
/// estimator inside it draws from its own sequence.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha20Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    /// A child stream, fresh from its start, determined by this stream's address and `k`.
    pub fn substream(&self, k: u64) -> Self {
        let id = splitmix64(splitmix64(self.stream_id) ^ splitmix64(k.wrapping_add(0xA5A5_A5A5)));
        Self::new(self.seed, id)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn standard_normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.standard_normal()).collect()
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.rng.random::<f64>()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.rng.random::<f64>() < p
    }

    /// A uniformly random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut self.rng);
        idx
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Lower Cholesky factor of the AR(1) correlation matrix `Σ_ij = ρ^|i−j|`.
pub fn ar1_chol(p: usize, rho: f64) -> Result<Mat<f64>> {
    if !(rho.is_finite() && rho.abs() < 1.0) {
        return Err(FvsError::InvalidInput(format!("AR(1) correlation must lie in (-1, 1), got {rho}")));
    }
    let s = (1.0 - rho * rho).sqrt();
    Ok(Mat::from_fn(p, p, |i, j| match (i, j) {
        (i, j) if j > i => 0.0,
        (i, 0) => rho.powi(i as i32),
        (i, j) => rho.powi((i - j) as i32) * s,
    }))
}

/// `n` independent rows distributed as `N(0, L L')`.
pub fn sample_gaussian_rows(rng: &mut RngStream, n: usize, chol: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let p = chol.nrows();
    if chol.ncols() != p {
        return Err(FvsError::Dimension(format!("Cholesky factor is {}x{}", p, chol.ncols())));
    }
    let mut out = Mat::<f64>::zeros(n, p);
    let mut z = vec![0.0; p];
    for i in 0..n {
        for zj in z.iter_mut() {
            *zj = rng.standard_normal();
        }
        for r in 0..p {
            let mut acc = 0.0;
            for (c, zc) in z.iter().enumerate().take(r + 1) {
                acc += chol[(r, c)] * zc;
            }
            out[(i, r)] = acc;
        }
    }
    Ok(out)
}

/// `n` i.i.d. category labels (0-based) with the given probabilities.
pub fn sample_multinomial_categories(rng: &mut RngStream, n: usize, probs: &[f64]) -> Result<Vec<usize>> {
    if probs.is_empty() || probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(FvsError::InvalidInput("category probabilities must be nonnegative numbers".into()));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(FvsError::InvalidInput(format!("category probabilities sum to {total}, not 1")));
    }
    let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    Ok((0..n)
        .map(|_| {
            let u = rng.uniform(0.0, 1.0);
            let mut acc = 0.0;
            for (k, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return k;
                }
            }
            last
        })
        .collect())
}

fn check_df(d1: f64, d2: f64) -> Result<()> {
    if !(d1.is_finite() && d1 > 0.0 && d2.is_finite() && d2 > 0.0) {
        return Err(FvsError::InvalidInput(format!("F degrees of freedom must be positive, got ({d1}, {d2})")));
    }
    Ok(())
}

fn beta_reg(a: f64, b: f64, t: f64) -> Result<f64> {
    checked_beta_reg(a, b, t).map_err(|e| FvsError::Numerical(format!("regularized beta failed: {e}")))
}

/// Distribution function of the central F distribution with `(d1, d2)` degrees of freedom.
pub fn f_cdf(x: f64, d1: f64, d2: f64) -> Result<f64> {
    check_df(d1, d2)?;
    if x.is_nan() {
        return Err(FvsError::InvalidInput("F argument is NaN".into()));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x == f64::INFINITY {
        return Ok(1.0);
    }
    // Use whichever tail keeps the beta argument away from 1.
    let z = d1 * x / (d1 * x + d2);
    if z <= 0.5 {
        beta_reg(d1 / 2.0, d2 / 2.0, z)
    } else {
        Ok(1.0 - beta_reg(d2 / 2.0, d1 / 2.0, d2 / (d1 * x + d2))?)
    }
}

/// Solves `I_t(a, b) = target` for `t ∈ (0, 1)` by Newton steps kept inside a bisection bracket.
fn invert_beta_reg(a: f64, b: f64, target: f64) -> Result<f64> {
    let ln_b = ln_beta(a, b);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut t = 0.5;
    for _ in 0..400 {
        let g = beta_reg(a, b, t)? - target;
        if g == 0.0 {
            return Ok(t);
        }
        if g < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        if hi - lo <= 4.0 * f64::EPSILON * t.max(f64::MIN_POSITIVE) {
            return Ok(0.5 * (lo + hi));
        }
        let dens = ((a - 1.0) * t.ln() + (b - 1.0) * (-t).ln_1p() - ln_b).exp();
        let newton = t - g / dens;
        t = if dens.is_finite() && dens > 0.0 && newton > lo && newton < hi {
            newton
        } else if lo > 0.0 && hi / lo > 4.0 {
            (lo * hi).sqrt()
        } else {
            0.5 * (lo + hi)
        };
        if t == lo || t == hi {
            return Ok(t);
        }
    }
    Err(FvsError::Numerical(format!("F quantile iteration did not converge for a = {a}, b = {b}")))
}

/// Quantile of the central F distribution: the `x` with `F_cdf(x) = q`.
pub fn f_quantile(q: f64, d1: f64, d2: f64) -> Result<f64> {
    check_df(d1, d2)?;
    if !(q > 0.0 && q < 1.0) {
        return Err(FvsError::InvalidInput(format!("quantile level must lie in (0, 1), got {q}")));
    }
    let (a, b) = (d1 / 2.0, d2 / 2.0);
    if q <= 0.5 {
        let z = invert_beta_reg(a, b, q)?;
        Ok(d2 * z / (d1 * (1.0 - z)))
    } else {
        // Upper tail: 1 − q = I_w(b, a) with w = d2 / (d1 x + d2).
        let w = invert_beta_reg(b, a, 1.0 - q)?;
        Ok(d2 * (1.0 - w) / (d1 * w))
    }
}

/// Two-sided `1 − level` critical value of Student's t with `df` degrees of freedom.
pub fn t_critical(level: f64, df: f64) -> Result<f64> {
    Ok(f_quantile(1.0 - level, 1.0, df)?.sqrt())
}
