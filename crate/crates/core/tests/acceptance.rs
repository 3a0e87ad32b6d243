//! End-to-end acceptance checks. Each test prints one `criterion N: PASS|FAIL` line.
//!
//! Published reference values carry their own Monte Carlo error, so "within k SE" is
//! measured against `k · sqrt(se_ours² + se_published²)`.

mod common;

use std::sync::Mutex;
use std::time::{Duration, Instant};

use common::*;
use fvs_core::baselines::{default_lambda_grid, ridge_cv};
use fvs_core::linalg::{penalized_gram_solve, PenalizedGram};
use fvs_core::probability::f_quantile;
use fvs_core::simhub::{
    categorical_recoding, gen_categorical, gen_highdim, gen_lowdim, generate, paired_interval, random_rotation,
    run_replications, Estimator, SimulationScenario, CV_FOLDS,
};
use fvs_core::tuning::{alpha_schedule, gamma_bar, gamma_f_ratio, gamma_opt, k_trace, sigma_check2};
use fvs_core::{fit_fvs, DesignMatrix, RngStream};

// Timed sections run one at a time so they do not compete for cores.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn report(id: u32, pass: bool, detail: &str) {
    // Written to the process stderr directly so the line survives output capture.
    let line = format!("criterion {id}: {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::Write::write_all(&mut std::io::stderr(), line.as_bytes());
    assert!(pass, "criterion {id} failed: {detail}");
}

fn within(ours: f64, se_ours: f64, published: f64, se_published: f64, k: f64) -> bool {
    (ours - published).abs() <= k * (se_ours * se_ours + se_published * se_published).sqrt()
}

fn max_fitted_gap(x1: &DesignMatrix, x2: &DesignMatrix, y: &[f64], gammas: &[f64]) -> f64 {
    gammas
        .iter()
        .map(|&g| max_abs_diff(&fit_fvs(x1, y, g).unwrap().fitted, &fit_fvs(x2, y, g).unwrap().fitted))
        .fold(0.0, f64::max)
}

/// Ridge as run in the simulations: λ chosen by 10-fold CV separately on each coding,
/// with identical folds.
fn ridge_relative_gap(x1: &DesignMatrix, x2: &DesignMatrix, y: &[f64], seed: u64) -> f64 {
    let grid = default_lambda_grid();
    let a = ridge_cv(x1, y, CV_FOLDS, &grid, true, &mut RngStream::new(seed, 0)).unwrap().fitted;
    let b = ridge_cv(x2, y, CV_FOLDS, &grid, true, &mut RngStream::new(seed, 0)).unwrap().fitted;
    let d: Vec<f64> = a.iter().zip(&b).map(|(u, v)| u - v).collect();
    norm(&d) / norm(&a)
}

#[test]
fn criterion_01_invariance() {
    const GAMMAS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
    const FVS_TOL: f64 = 1e-7;
    const RIDGE_MIN_REL: f64 = 1e-3;
    const BUDGET: Duration = Duration::from_secs(30);
    let _g = serial();
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let taus = [0.1, 1.0, 10.0];
    for i in 0..20u64 {
        let mut rng = RngStream::new(101, i);
        let tau = taus[i as usize % 3];

        let inst = gen_lowdim(300, 75, tau, 1.0, &mut rng).unwrap();
        let x2 = inst.x.transform(random_rotation(75, &mut rng).unwrap().as_ref()).unwrap();
        let scale = inst.y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        worst = worst.max(max_fitted_gap(&inst.x, &x2, &inst.y, &GAMMAS) / scale);

        let inst = gen_categorical(100, tau, tau, 1, 1.0, &mut rng).unwrap();
        let t = if i % 2 == 0 {
            let refs = [0, 1, 2].map(|_| (rng.uniform(0.0, 5.0) as usize).min(4));
            categorical_recoding(refs).unwrap()
        } else {
            random_rotation(inst.x.p(), &mut rng).unwrap()
        };
        let x2 = inst.x.transform(t.as_ref()).unwrap();
        let scale = inst.y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        worst = worst.max(max_fitted_gap(&inst.x, &x2, &inst.y, &GAMMAS) / scale);

        let inst = gen_highdim(200, 300, tau, 1.0, &mut rng).unwrap();
        let x2 = inst.x.transform(random_rotation(300, &mut rng).unwrap().as_ref()).unwrap();
        let scale = inst.y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        worst = worst.max(max_fitted_gap(&inst.x, &x2, &inst.y, &GAMMAS) / scale);
    }

    let mut rng = RngStream::new(102, 0);
    let fullrank = generate(&SimulationScenario::fullrank_lowdim(300, 150, 0.0, 0.1, 1), &mut rng).unwrap();
    let rot = random_rotation(150, &mut rng).unwrap();
    let ridge_fullrank = ridge_relative_gap(&fullrank.x, &fullrank.x.transform(rot.as_ref()).unwrap(), &fullrank.y, 103);
    let low = gen_lowdim(300, 75, 1.0, 1.0, &mut rng).unwrap();
    let rot = random_rotation(75, &mut rng).unwrap();
    let ridge_low = ridge_relative_gap(&low.x, &low.x.transform(rot.as_ref()).unwrap(), &low.y, 104);

    let elapsed = start.elapsed();
    let pass = worst <= FVS_TOL && ridge_fullrank > RIDGE_MIN_REL && ridge_low > RIDGE_MIN_REL && elapsed < BUDGET;
    report(
        1,
        pass,
        &format!(
            "max FVS gap / max|y| = {worst:.2e} (tol {FVS_TOL:e}); ridge relative gap {ridge_fullrank:.3e} (full-rank), \
             {ridge_low:.3e} (low-dim), need > {RIDGE_MIN_REL:e}; {elapsed:.1?}"
        ),
    );
}

#[test]
fn criterion_02_risk_formula_monte_carlo() {
    const REPS: u64 = 2000;
    const K: f64 = 3.0;
    const OLS_PUBLISHED: (f64, f64) = (0.25402, 0.00619);
    const BUDGET: Duration = Duration::from_secs(120);
    let _g = serial();
    let start = Instant::now();
    let (n, p, sigma) = (300, 75, 1.0);
    let inst = gen_lowdim(n, p, 1.0, sigma, &mut RngStream::new(202, 0)).unwrap();
    let mu_bar = mean(&inst.mu);
    let delta2: f64 = inst.mu.iter().map(|m| (m - mu_bar).powi(2)).sum();
    let r = p as f64;
    let gammas = [0.0, 0.5, 1.0];
    let mut losses = vec![Vec::with_capacity(REPS as usize); 3];
    for rep in 0..REPS {
        let y = inst.redraw_noise(&mut RngStream::new(203, rep));
        for (k, &g) in gammas.iter().enumerate() {
            let f = fit_fvs(&inst.x, &y, g).unwrap().fitted;
            losses[k].push(f.iter().zip(&inst.mu).map(|(a, b)| (a - b).powi(2)).sum::<f64>());
        }
    }
    let mut pass = true;
    let mut detail = String::new();
    for (k, &g) in gammas.iter().enumerate() {
        let want = sigma * sigma * (g * g * r + 1.0 - g * g) + (1.0 - g).powi(2) * delta2;
        let (m, se) = mean_se(&losses[k]);
        let ok = (m - want).abs() <= K * se;
        pass &= ok;
        detail += &format!("gamma {g}: {m:.3} vs {want:.3} (se {se:.3}); ");
    }
    let (m1, se1) = mean_se(&losses[2]);
    let (per_n, se_n) = (m1 / n as f64, se1 / n as f64);
    let ols_ok = within(per_n, se_n, OLS_PUBLISHED.0, OLS_PUBLISHED.1, 4.0);
    let elapsed = start.elapsed();
    pass &= ols_ok && elapsed < BUDGET;
    detail += &format!("OLS per-n loss {per_n:.5} vs published {:.5}; {elapsed:.1?}", OLS_PUBLISHED.0);
    report(2, pass, &detail);
}

#[test]
fn criterion_03_gamma_opt_minimizes_risk() {
    const TOL: f64 = 1e-3;
    let _g = serial();
    let start = Instant::now();
    let mut rng = RngStream::new(303, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let delta2 = 10f64.powf(rng.uniform(-2.0, 3.0));
        let sigma2 = 10f64.powf(rng.uniform(-1.0, 1.0));
        let r = 2 + (rng.uniform(0.0, 200.0) as usize);
        let risk = |g: f64| sigma2 * (g * g * r as f64 + 1.0 - g * g) + (1.0 - g).powi(2) * delta2;
        let best = (0..=1000)
            .map(|k| k as f64 / 1000.0)
            .min_by(|a, b| risk(*a).total_cmp(&risk(*b)))
            .unwrap();
        worst = worst.max((best - gamma_opt(delta2, sigma2, r).unwrap()).abs());
    }
    let elapsed = start.elapsed();
    report(3, worst <= TOL && elapsed < Duration::from_secs(1), &format!("max |grid argmin - gamma_opt| = {worst:.2e}; {elapsed:.1?}"));
}

#[test]
fn criterion_04_low_dimensional_tables() {
    const K: f64 = 4.0;
    const REPS: usize = 50;
    const BUDGET: Duration = Duration::from_secs(600);
    // (tau, [(estimator, mean, se)]) for n = 300, p = 75.
    let published: [(f64, [(&str, f64, f64); 5]); 3] = [
        (
            10f64.powf(-0.5),
            [
                ("ols", 0.24418, 0.00585),
                ("ridge_cv", 0.03294, 0.00108),
                ("oracle", 0.02890, 0.00072),
                ("f_ratio", 0.03162, 0.00092),
                ("f_ratio_q95", 0.03281, 0.00087),
            ],
        ),
        (
            1.0,
            [
                ("ols", 0.26053, 0.00628),
                ("ridge_cv", 0.14650, 0.00363),
                ("oracle", 0.12140, 0.00242),
                ("f_ratio", 0.12749, 0.00278),
                ("f_ratio_q95", 0.12843, 0.00320),
            ],
        ),
        (
            10f64.powf(0.5),
            [
                ("ols", 0.25099, 0.00548),
                ("ridge_cv", 0.24065, 0.00505),
                ("oracle", 0.22584, 0.00474),
                ("f_ratio", 0.22714, 0.00472),
                ("f_ratio_q95", 0.22714, 0.00472),
            ],
        ),
    ];
    let _g = serial();
    let start = Instant::now();
    let mut pass = true;
    let mut detail = String::new();
    for (tau, rows) in published {
        let names: Vec<&str> = rows.iter().map(|r| r.0).collect();
        let est: Vec<Estimator> = names.iter().map(|n| Estimator::by_name(n).unwrap()).collect();
        let scenario = SimulationScenario::lowdim(300, 75, tau, 1.0).with_replications(REPS);
        let rep = run_replications(&scenario, &est, 404, workers()).unwrap();
        for (name, m_pub, se_pub) in rows {
            let s = rep.summary(name).unwrap();
            let (m, se) = (s.mean.unwrap(), s.se.unwrap());
            let ok = s.n_missing == 0 && within(m, se, m_pub, se_pub, K);
            pass &= ok;
            if !ok {
                detail += &format!("[tau {tau:.3} {name}: {m:.5} ({se:.5}) vs {m_pub:.5} ({se_pub:.5})] ");
            }
        }
    }
    let est = vec![Estimator::by_name("f_ratio").unwrap(), Estimator::by_name("ridge_cv").unwrap()];
    let scenario = SimulationScenario::lowdim(300, 150, 1.0, 1.0).with_replications(REPS);
    let rep = run_replications(&scenario, &est, 405, workers()).unwrap();
    let iv = paired_interval(&rep, "f_ratio", "ridge_cv").unwrap();
    let elapsed = start.elapsed();
    pass &= iv.upper < 0.0 && elapsed < BUDGET;
    detail += &format!(
        "15 table cells checked; paired FVS - ridge at p = 150: ({:.5}, {:.5}), published (-0.08603, -0.06804); {elapsed:.1?}",
        iv.lower, iv.upper
    );
    report(4, pass, &detail);
}

#[test]
fn criterion_05_gamma_hat_accuracy() {
    const K: f64 = 4.0;
    const PUBLISHED: (f64, f64) = (0.006501, 0.001748);
    const TREND_REPS: u64 = 1000;
    const BUDGET: Duration = Duration::from_secs(300);
    let _g = serial();
    let start = Instant::now();
    let sq_err = |n: usize, seed: u64, reps: u64| -> Vec<f64> {
        (0..reps)
            .map(|r| {
                let inst = gen_lowdim(n, 75, 1.0, 1.0, &mut RngStream::new(seed, r)).unwrap();
                (gamma_f_ratio(&inst.x, &inst.y, None).unwrap().gamma - inst.gamma_opt).powi(2)
            })
            .collect()
    };
    let (m, se) = mean_se(&sq_err(300, 505, 100));
    let table_ok = within(m, se, PUBLISHED.0, PUBLISHED.1, K);
    let trend: Vec<(f64, f64)> = [150, 300, 600].iter().map(|&n| mean_se(&sq_err(n, 506, TREND_REPS))).collect();
    let monotone = trend.windows(2).all(|w| w[1].0 < w[0].0);
    let elapsed = start.elapsed();
    report(
        5,
        table_ok && monotone && elapsed < BUDGET,
        &format!(
            "mean sq error {m:.6} ({se:.6}) vs {:.6} ({:.6}); n = 150, 300, 600: {:.6}, {:.6}, {:.6}; {elapsed:.1?}",
            PUBLISHED.0, PUBLISHED.1, trend[0].0, trend[1].0, trend[2].0
        ),
    );
}

#[test]
fn criterion_06_high_dimensional_variance() {
    const REL_TOL: f64 = 1e-4;
    const K: f64 = 4.0;
    const PUBLISHED: (f64, f64) = (0.89875, 0.01264);
    const BUDGET: Duration = Duration::from_secs(600);
    let _g = serial();
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for i in 0..20u64 {
        let inst = gen_highdim(30, 50, 1.0, 1.0, &mut RngStream::new(606, i)).unwrap();
        let t = [1.0, 1.5, 2.0][i as usize % 3];
        let alpha = alpha_schedule(t, &inst.y).unwrap();
        let eta = penalized_likelihood_eta(&to_dense(inst.x.data()), &inst.y, alpha);
        let closed = sigma_check2(&inst.x, &inst.y, alpha, false).unwrap();
        worst = worst.max((closed - eta.powi(-2)).abs() / closed);
    }
    let scenario = SimulationScenario::highdim(200, 300, 10f64.powf(0.5), 1.0).with_replications(50);
    let rep = run_replications(&scenario, &[Estimator::by_name("bar_rep1").unwrap()], 607, workers()).unwrap();
    let s = rep.summary("bar_rep1").unwrap();
    let (m, se) = (s.mean.unwrap(), s.se.unwrap());
    let table_ok = s.n_missing == 0 && within(m, se, PUBLISHED.0, PUBLISHED.1, K);
    let elapsed = start.elapsed();
    report(
        6,
        worst <= REL_TOL && table_ok && elapsed < BUDGET,
        &format!(
            "max relative gap to likelihood minimizer {worst:.2e}; bar_rep1 loss {m:.5} ({se:.5}) vs {:.5} ({:.5}); {elapsed:.1?}",
            PUBLISHED.0, PUBLISHED.1
        ),
    );
}

#[test]
fn criterion_07_f_quantile_accuracy() {
    const TOL: f64 = 1e-6;
    const BUDGET: Duration = Duration::from_secs(30);
    let _g = serial();
    let start = Instant::now();
    let mut rng = RngStream::new(707, 0);
    let mut dfs: Vec<(f64, f64)> = vec![(1.0, 1.0), (1.0, 300.0), (300.0, 1.0), (300.0, 300.0), (2.0, 10.0)];
    for _ in 0..20 {
        let d1 = 1.0 + rng.uniform(0.0, 300.0).floor().min(299.0);
        let d2 = 1.0 + rng.uniform(0.0, 300.0).floor().min(299.0);
        dfs.push((d1, d2));
    }
    let mut worst: f64 = 0.0;
    let mut at = (0.0, 0.0, 0.0);
    for &(d1, d2) in &dfs {
        for q in [0.9, 0.95] {
            let gap = (f_quantile(q, d1, d2).unwrap() - f_quantile_quadrature(q, d1, d2)).abs();
            if gap > worst {
                worst = gap;
                at = (q, d1, d2);
            }
        }
    }
    let elapsed = start.elapsed();
    report(
        7,
        worst <= TOL && elapsed < BUDGET,
        &format!("{} quantiles, max gap {worst:.2e} at {at:?}; {elapsed:.1?}", 2 * dfs.len()),
    );
}

#[test]
fn criterion_08_submodel_shrinkage() {
    const K: f64 = 4.0;
    const PAIRED_K: f64 = 3.0;
    const PUBLISHED: (f64, f64) = (0.11780, 0.00400);
    const BUDGET: Duration = Duration::from_secs(300);
    let _g = serial();
    let start = Instant::now();
    let est = vec![Estimator::by_name("oracle").unwrap(), Estimator::by_name("submodel_oracle").unwrap()];
    let scenario = SimulationScenario::submodel(5, 0.1, 1.0).with_replications(50);
    let rep = run_replications(&scenario, &est, 808, workers()).unwrap();
    let s = rep.summary("submodel_oracle").unwrap();
    let (m, se) = (s.mean.unwrap(), s.se.unwrap());
    let intercept = rep.summary("oracle").unwrap().mean.unwrap();
    let diffs: Vec<f64> = rep
        .losses_of("submodel_oracle")
        .unwrap()
        .iter()
        .zip(rep.losses_of("oracle").unwrap())
        .map(|(a, b)| a.unwrap() - b.unwrap())
        .collect();
    let (dm, dse) = mean_se(&diffs);
    let elapsed = start.elapsed();
    let pass = s.n_missing == 0 && within(m, se, PUBLISHED.0, PUBLISHED.1, K) && dm + PAIRED_K * dse < 0.0 && elapsed < BUDGET;
    report(
        8,
        pass,
        &format!(
            "submodel oracle {m:.5} ({se:.5}) vs {:.5} ({:.5}); intercept oracle {intercept:.5} (published 0.37009); \
             paired difference {dm:.5} (se {dse:.5}); {elapsed:.1?}",
            PUBLISHED.0, PUBLISHED.1
        ),
    );
}

#[test]
fn criterion_09_structured_solve() {
    const REL_TOL: f64 = 1e-8;
    const BUDGET: Duration = Duration::from_secs(10);
    let _g = serial();
    let start = Instant::now();
    let mut rng = RngStream::new(909, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = 2 + (rng.uniform(0.0, 19.0) as usize).min(18);
        let p = 2 + (rng.uniform(0.0, 14.0) as usize).min(13);
        let alpha = 10f64.powf(rng.uniform(-3.0, 2.0));
        let x = random_design(&mut rng, n, p);
        let dm = design(&x);
        let nf = n as f64;
        let mut a = matmul(&transpose(&x), &x);
        for (j, row) in a.iter_mut().enumerate().skip(1) {
            row[j] += 2.0 * nf * alpha;
        }
        let inv = inverse(&a);
        let b = rng.standard_normals(p);
        let want = matvec(&inv, &b);
        let got = penalized_gram_solve(&dm, alpha, &b).unwrap();
        worst = worst.max(max_abs_diff(&got, &want) / norm(&want));
        let k = matmul(&matmul(&x, &inv), &transpose(&x));
        let tr: f64 = (0..n).map(|i| k[i][i]).sum();
        worst = worst.max((k_trace(&dm, alpha).unwrap() - tr).abs() / tr);
        let y = rng.standard_normals(n);
        let ky = PenalizedGram::new(&dm, alpha).unwrap().apply(&y).unwrap();
        worst = worst.max(max_abs_diff(&ky, &matvec(&k, &y)) / norm(&y));
    }
    let elapsed = start.elapsed();
    report(9, worst <= REL_TOL && elapsed < BUDGET, &format!("max relative gap {worst:.2e}; {elapsed:.1?}"));
}

#[test]
fn criterion_10_large_fit_time() {
    const BUDGET: Duration = Duration::from_secs(10);
    let (n, p) = (2000, 5000);
    let mut rng = RngStream::new(1010, 0);
    let mut data = faer::Mat::<f64>::zeros(n, p);
    for j in 0..p {
        for i in 0..n {
            data[(i, j)] = if j == 0 { 1.0 } else { rng.standard_normal() };
        }
    }
    let y = rng.standard_normals(n);
    let _g = serial();
    let start = Instant::now();
    let x = DesignMatrix::new(data).unwrap();
    let alpha = alpha_schedule(1.5, &y).unwrap();
    let tuned = gamma_bar(&x, &y, alpha, true).unwrap();
    let fit = fit_fvs(&x, &y, tuned.gamma).unwrap();
    let elapsed = start.elapsed();
    report(
        10,
        fit.fitted.len() == n && elapsed < BUDGET,
        &format!("rank {} design, gamma {:.4}; factorization + tuning + fit {elapsed:.2?}", x.rank(), tuned.gamma),
    );
}
