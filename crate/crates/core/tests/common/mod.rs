//! Independent dense oracles and instance builders shared by the integration tests.
#![allow(dead_code)]

use faer::Mat;
use fvs_core::{DesignMatrix, RngStream};

pub type Dense = Vec<Vec<f64>>;

pub fn to_dense(m: faer::MatRef<'_, f64>) -> Dense {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

pub fn to_mat(a: &Dense) -> Mat<f64> {
    Mat::from_fn(a.len(), a[0].len(), |i, j| a[i][j])
}

pub fn transpose(a: &Dense) -> Dense {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for l in 0..k {
            let ail = a[i][l];
            for j in 0..m {
                out[i][j] += ail * b[l][j];
            }
        }
    }
    out
}

pub fn matvec(a: &Dense, x: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(x).map(|(u, v)| u * v).sum()).collect()
}

/// Gauss–Jordan inverse with partial pivoting.
pub fn inverse(a: &Dense) -> Dense {
    let n = a.len();
    let mut m: Dense = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for c in 0..n {
        let piv = (c..n).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
        m.swap(c, piv);
        let d = m[c][c];
        assert!(d.abs() > 1e-300, "singular matrix in oracle");
        for v in m[c].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                if f != 0.0 {
                    for j in 0..2 * n {
                        m[r][j] -= f * m[c][j];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &Dense, b: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut m: Dense = a.iter().zip(b).map(|(r, bi)| {
        let mut row = r.clone();
        row.push(*bi);
        row
    }).collect();
    for c in 0..n {
        let piv = (c..n).max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs())).unwrap();
        m.swap(c, piv);
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for j in c..=n {
                m[r][j] -= f * m[c][j];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
        x[i] = (m[i][n] - s) / m[i][i];
    }
    x
}

/// `X (X'X)⁻¹ X'` for a full-column-rank `X`.
pub fn projector_normal_eq(x: &Dense) -> Dense {
    let xt = transpose(x);
    matmul(&matmul(x, &inverse(&matmul(&xt, x))), &xt)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn mean(a: &[f64]) -> f64 {
    a.iter().sum::<f64>() / a.len() as f64
}

/// Mean and standard error of a sample.
pub fn mean_se(a: &[f64]) -> (f64, f64) {
    let m = mean(a);
    let v = a.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (a.len() - 1) as f64;
    (m, (v / a.len() as f64).sqrt())
}

/// `n × p` design with a ones column followed by i.i.d. normal entries.
pub fn random_design(rng: &mut RngStream, n: usize, p: usize) -> Dense {
    (0..n)
        .map(|_| (0..p).map(|j| if j == 0 { 1.0 } else { rng.standard_normal() }).collect())
        .collect()
}

pub fn design(a: &Dense) -> DesignMatrix {
    DesignMatrix::new(to_mat(a)).unwrap()
}

pub fn random_square(rng: &mut RngStream, p: usize) -> Dense {
    (0..p).map(|_| (0..p).map(|_| rng.standard_normal()).collect()).collect()
}

// Gauss–Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let s = f(c - h * XGK[j]) + f(c + h * XGK[j]);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss–Kronrod integration to absolute tolerance `tol`.
/// Composite Gauss–Kronrod rule with panels of width at most `h`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, h: f64) -> f64 {
    let panels = ((b - a) / h).ceil().max(1.0) as usize;
    let w = (b - a) / panels as f64;
    (0..panels).map(|k| gk15(f, a + k as f64 * w, a + (k + 1) as f64 * w).0).sum()
}

/// Quantile of F(d1, d2) by quadrature of the beta density in angle form
/// (`t = sin²θ`), normalized by its own total mass and inverted in θ by Newton steps
/// on the tail integral, safeguarded by a bisection bracket.
pub fn f_quantile_quadrature(q: f64, d1: f64, d2: f64) -> f64 {
    let (a, b) = (d1 / 2.0, d2 / 2.0);
    let log_g = move |th: f64| (2.0 * a - 1.0) * th.sin().ln() + (2.0 * b - 1.0) * th.cos().ln();
    // Shift by the log-density at its mode to keep the integrand near one.
    let mode = ((2.0 * a - 1.0).max(0.0) / (2.0 * b - 1.0).max(1e-300)).sqrt().atan();
    let shift = if a > 0.5 && b > 0.5 { log_g(mode) } else { 0.0 };
    let g = move |th: f64| {
        if th <= 0.0 || th >= std::f64::consts::FRAC_PI_2 {
            let at_zero = th <= 0.0;
            let exponent = if at_zero { 2.0 * a - 1.0 } else { 2.0 * b - 1.0 };
            return if exponent == 0.0 { (-shift).exp() } else { 0.0 };
        }
        (log_g(th) - shift).exp()
    };
    let half_pi = std::f64::consts::FRAC_PI_2;
    // Split at the mode so each piece is unimodal.
    let m = mode.clamp(1e-3, half_pi - 1e-3);
    // The integrand is sin^(d1−1) cos^(d2−1), smooth with a peak of width about
    // 1/√(d1 + d2); panels far narrower than that make the rule exact to rounding.
    let h = 2e-3;
    let total = integrate(&g, 0.0, m, h) + integrate(&g, m, half_pi, h);
    let tail = |th: f64| {
        let rest = if th < m {
            integrate(&g, th, m, h) + integrate(&g, m, half_pi, h)
        } else {
            integrate(&g, th, half_pi, h)
        };
        rest / total
    };
    let target = 1.0 - q;
    let (mut lo, mut hi) = (0.0, half_pi);
    let mut th = m;
    for _ in 0..100 {
        let err = tail(th) - target;
        if err > 0.0 {
            lo = th;
        } else {
            hi = th;
        }
        let dens = g(th) / total;
        let mut next = th + err / dens;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - th).abs() < 1e-15 || hi - lo < 1e-15 {
            th = next;
            break;
        }
        th = next;
    }
    d2 / d1 * th.tan().powi(2)
}

/// Minimizes `(2n)⁻¹‖yη − Xb‖² − log η + α‖b₋₁‖²` jointly over `(b, η)` by damped
/// Newton steps on the dense Hessian and returns `η`.
pub fn penalized_likelihood_eta(x: &Dense, y: &[f64], alpha: f64) -> f64 {
    let n = x.len();
    let p = x[0].len();
    let nf = n as f64;
    let xt = transpose(x);
    let xtx = matmul(&xt, x);
    let xty = matvec(&xt, y);
    let yty: f64 = y.iter().map(|v| v * v).sum();
    let objective = |b: &[f64], eta: f64| {
        let xb = matvec(x, b);
        let rss: f64 = y.iter().zip(&xb).map(|(yi, v)| (yi * eta - v).powi(2)).sum();
        let pen: f64 = b[1..].iter().map(|v| v * v).sum();
        rss / (2.0 * nf) - eta.ln() + alpha * pen
    };
    let mut b = vec![0.0; p];
    let ybar = mean(y);
    let var = y.iter().map(|v| (v - ybar).powi(2)).sum::<f64>() / nf;
    let mut eta = 1.0 / var.sqrt();
    let mut f = objective(&b, eta);
    for _ in 0..200 {
        let xtxb = matvec(&xtx, &b);
        let mut grad: Vec<f64> = (0..p)
            .map(|j| (xtxb[j] - eta * xty[j]) / nf + if j > 0 { 2.0 * alpha * b[j] } else { 0.0 })
            .collect();
        let ytxb: f64 = xty.iter().zip(&b).map(|(u, v)| u * v).sum();
        grad.push((eta * yty - ytxb) / nf - 1.0 / eta);
        let mut h = vec![vec![0.0; p + 1]; p + 1];
        for i in 0..p {
            for j in 0..p {
                h[i][j] = xtx[i][j] / nf;
            }
            if i > 0 {
                h[i][i] += 2.0 * alpha;
            }
            h[i][p] = -xty[i] / nf;
            h[p][i] = -xty[i] / nf;
        }
        h[p][p] = yty / nf + 1.0 / (eta * eta);
        let step = solve(&h, &grad);
        let decrement: f64 = step.iter().zip(&grad).map(|(s, g)| s * g).sum();
        if decrement < 1e-26 {
            break;
        }
        let mut t = 1.0;
        loop {
            let nb: Vec<f64> = b.iter().zip(&step).map(|(v, s)| v - t * s).collect();
            let ne = eta - t * step[p];
            if ne > 0.0 {
                let nf_val = objective(&nb, ne);
                if nf_val <= f - 0.25 * t * decrement || t < 1e-12 {
                    b = nb;
                    eta = ne;
                    f = nf_val;
                    break;
                }
            }
            t *= 0.5;
        }
    }
    eta
}
