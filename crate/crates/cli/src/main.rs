//! `fvs`: fit, tune, simulate and check invariance of fitted-value shrinkage.
//!
//! Exit codes: 0 success, 1 fatal error (or a failed invariance check),
//! 2 simulation finished but some estimator cells failed.

mod dataset;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fvs_core::baselines::{default_lambda_grid, ridge_cv};
use fvs_core::simhub::{
    categorical_recoding, generate, invariance_check, random_rotation, run_replications, Estimator, Family,
    SimulationScenario, CODING2_REFERENCES,
};
use fvs_core::tuning::{
    alpha_schedule, cv_gamma, default_cv_grid, gamma_bar, gamma_f_ratio, sigma_hat2, ThresholdLevel,
};
use fvs_core::{fit_fvs, DesignMatrix, FvsError, RngStream, TuningMethod, TuningResult};
use serde::Serialize;

use dataset::{CategoricalSpec, Dataset, DatasetSpec, Interaction, Table};

const EXIT_FATAL: u8 = 1;
const EXIT_PARTIAL: u8 = 2;

/// Shrinkage values tried by the invariance check.
const INVARIANCE_GAMMAS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
/// FVS discrepancy allowed by the invariance check, relative to max |y|.
const INVARIANCE_TOL: f64 = 1e-7;

#[derive(Parser)]
#[command(name = "fvs", version, about = "Fitted-value shrinkage regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the shrinkage estimator to a CSV dataset.
    Fit(FitArgs),
    /// Select the shrinkage parameter and print it as JSON.
    Tune(TuneArgs),
    /// Run a Monte Carlo scenario described by a JSON file.
    Simulate(SimulateArgs),
    /// Compare fitted values across two parametrizations of the same column space.
    InvarianceCheck(InvarianceArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// CSV file with a header row.
    data: PathBuf,
    /// Response column.
    #[arg(long, short = 'y')]
    response: String,
    /// Categorical column and its reference level, NAME=REF. Repeatable.
    #[arg(long = "categorical", value_name = "NAME=REF")]
    categorical: Vec<CategoricalSpec>,
    /// Product term between two columns, A:B. Repeatable.
    #[arg(long = "interaction", value_name = "A:B")]
    interactions: Vec<Interaction>,
}

impl DataArgs {
    fn spec(&self) -> DatasetSpec {
        DatasetSpec {
            response: self.response.clone(),
            categorical: self.categorical.clone(),
            interactions: self.interactions.clone(),
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    /// f-ratio when n > rank(X), bar-corrected otherwise.
    Auto,
    FRatio,
    FRatioQ90,
    FRatioQ95,
    Cv,
    Bar,
    BarCorrected,
}

#[derive(Args, Clone)]
struct TuningArgs {
    /// Selector for γ.
    #[arg(long, value_enum, default_value = "auto")]
    method: MethodArg,
    /// Exponent t in α = nᵗ / (2‖y − ȳ1‖²) for the bar selectors.
    #[arg(long, default_value_t = 1.5)]
    alpha_t: f64,
    /// Number of folds for cross-validation.
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Seed for fold assignment.
    #[arg(long, env = "FVS_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Shrinkage parameter in [0, 1], or "auto" to select it with --method.
    #[arg(long, default_value = "auto")]
    gamma: GammaArg,
    #[command(flatten)]
    tuning: TuningArgs,
    /// Directory for coefficients.csv, fitted.csv and summary.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    tuning: TuningArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario JSON file.
    config: PathBuf,
    /// Summary CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-replication loss CSV path.
    #[arg(long)]
    replications_out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    /// Overrides the seed in the config file.
    #[arg(long, env = "FVS_SEED")]
    seed: Option<u64>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum TransformArg {
    Identity,
    /// Switch the reference level of every categorical column.
    Recoding,
    /// Multiply the design by a random orthogonal matrix.
    GramSchmidtRotation,
}

#[derive(Args)]
struct InvarianceArgs {
    /// CSV file with a header row.
    #[arg(conflicts_with = "scenario", required_unless_present = "scenario")]
    data: Option<PathBuf>,
    /// Response column (with a CSV file).
    #[arg(long, short = 'y', requires = "data")]
    response: Option<String>,
    #[arg(long = "categorical", value_name = "NAME=REF")]
    categorical: Vec<CategoricalSpec>,
    #[arg(long = "interaction", value_name = "A:B")]
    interactions: Vec<Interaction>,
    /// Scenario JSON file to draw one instance from, instead of a CSV file.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, value_enum)]
    transform: TransformArg,
    /// Ridge penalty; selected by 10-fold CV on the first design when omitted.
    #[arg(long)]
    ridge_lambda: Option<f64>,
    #[arg(long, env = "FVS_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy)]
enum GammaArg {
    Auto,
    Value(f64),
}

impl std::str::FromStr for GammaArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(GammaArg::Auto);
        }
        match s.parse::<f64>() {
            Ok(g) if (0.0..=1.0).contains(&g) => Ok(GammaArg::Value(g)),
            _ => Err(format!("expected a number in [0, 1] or 'auto', got '{s}'")),
        }
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Error carrying the process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<FvsError> for Failure {
    fn from(e: FvsError) -> Self {
        Failure { code: EXIT_FATAL, message: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure { code: EXIT_FATAL, message: format!("i/o: {e}") }
    }
}

fn fatal(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_FATAL, message: message.into() }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_FATAL) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Tune(a) => cmd_tune(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::InvarianceCheck(a) => cmd_invariance(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load(args: &DataArgs) -> Result<Dataset, Failure> {
    let table = Table::read(&args.data)?;
    Ok(args.spec().build(&table)?)
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| fatal(e.to_string()))?;
    let mut out = io::stdout().lock();
    writeln!(out, "{text}")?;
    Ok(())
}

fn is_constant(y: &[f64]) -> bool {
    y.iter().all(|v| *v == y[0])
}

fn select_gamma(x: &DesignMatrix, y: &[f64], t: &TuningArgs) -> Result<TuningResult, Failure> {
    let interpolating = x.n() <= x.rank();
    let method = match t.method {
        MethodArg::Auto if interpolating => MethodArg::BarCorrected,
        MethodArg::Auto => MethodArg::FRatio,
        m => m,
    };
    let f_based = matches!(method, MethodArg::FRatio | MethodArg::FRatioQ90 | MethodArg::FRatioQ95);
    if f_based && interpolating {
        return Err(fatal(format!(
            "F-based selectors need n > rank(X), but n = {} and rank = {}: the error variance cannot be \
             estimated from an interpolating fit; use --method bar or --method bar-corrected",
            x.n(),
            x.rank()
        )));
    }
    let plain = |gamma, method| TuningResult {
        gamma,
        method,
        f_stat: None,
        sigma2_estimate: None,
        alpha: None,
        clamped: false,
    };
    // A constant response has no signal to keep, whatever the selector.
    if is_constant(y) {
        let tag = match method {
            MethodArg::FRatio => TuningMethod::FRatio,
            MethodArg::FRatioQ90 => TuningMethod::FRatioQ90,
            MethodArg::FRatioQ95 => TuningMethod::FRatioQ95,
            MethodArg::Cv => TuningMethod::Cv,
            MethodArg::Bar => TuningMethod::HighdimBar,
            _ => TuningMethod::HighdimBarCorrected,
        };
        return Ok(plain(0.0, tag));
    }
    let r = match method {
        MethodArg::FRatio => gamma_f_ratio(x, y, None)?,
        MethodArg::FRatioQ90 => gamma_f_ratio(x, y, Some(ThresholdLevel::Q90))?,
        MethodArg::FRatioQ95 => gamma_f_ratio(x, y, Some(ThresholdLevel::Q95))?,
        MethodArg::Cv => cv_gamma(x, y, t.folds, &default_cv_grid(), &mut RngStream::new(t.seed, 0))?,
        MethodArg::Bar | MethodArg::BarCorrected => {
            gamma_bar(x, y, alpha_schedule(t.alpha_t, y)?, method == MethodArg::BarCorrected)?
        }
        MethodArg::Auto => unreachable!("auto is resolved above"),
    };
    Ok(r)
}

#[derive(Serialize)]
struct TuneReport {
    gamma: f64,
    method: TuningMethod,
    f_stat: Option<f64>,
    sigma2_estimate: Option<f64>,
    alpha: Option<f64>,
    clamped: bool,
    n: usize,
    p: usize,
    rank: usize,
}

impl TuneReport {
    fn new(r: &TuningResult, x: &DesignMatrix) -> Self {
        Self {
            gamma: r.gamma,
            method: r.method,
            f_stat: r.f_stat.filter(|f| f.is_finite()),
            sigma2_estimate: r.sigma2_estimate,
            alpha: r.alpha,
            clamped: r.clamped,
            n: x.n(),
            p: x.p(),
            rank: x.rank(),
        }
    }
}

fn cmd_tune(a: TuneArgs) -> Result<(), Failure> {
    let ds = load(&a.data)?;
    let r = select_gamma(&ds.x, &ds.y, &a.tuning)?;
    print_json(&TuneReport::new(&r, &ds.x))
}

#[derive(Serialize)]
struct FitSummary {
    gamma: f64,
    /// `fixed` when γ was given on the command line.
    method: String,
    f_stat: Option<f64>,
    /// Residual variance estimate RSS / (n − rank), when n > rank.
    sigma2_hat: Option<f64>,
    /// Variance estimate used by the selector, when it computed one.
    sigma2_estimate: Option<f64>,
    alpha: Option<f64>,
    clamped: bool,
    n: usize,
    p: usize,
    rank: usize,
    terms: Vec<String>,
}

fn cmd_fit(a: FitArgs) -> Result<(), Failure> {
    let ds = load(&a.data)?;
    let tuned = match a.gamma {
        GammaArg::Value(_) => None,
        GammaArg::Auto => Some(select_gamma(&ds.x, &ds.y, &a.tuning)?),
    };
    let gamma = match (a.gamma, &tuned) {
        (GammaArg::Value(g), _) => g,
        (GammaArg::Auto, Some(t)) => t.gamma,
        (GammaArg::Auto, None) => unreachable!("tuned above"),
    };
    let fit = fit_fvs(&ds.x, &ds.y, gamma)?;
    let method = match &tuned {
        Some(t) => serde_json::to_value(t.method)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default(),
        None => "fixed".to_string(),
    };
    let summary = FitSummary {
        gamma,
        method,
        f_stat: tuned.as_ref().and_then(|t| t.f_stat).filter(|f| f.is_finite()),
        sigma2_hat: if ds.x.n() > ds.x.rank() { Some(sigma_hat2(&ds.x, &ds.y)?) } else { None },
        sigma2_estimate: tuned.as_ref().and_then(|t| t.sigma2_estimate),
        alpha: tuned.as_ref().and_then(|t| t.alpha),
        clamped: tuned.as_ref().is_some_and(|t| t.clamped),
        n: ds.x.n(),
        p: ds.x.p(),
        rank: ds.x.rank(),
        terms: ds.terms.clone(),
    };
    fs::create_dir_all(&a.out)?;
    let mut coef = csv::Writer::from_path(a.out.join("coefficients.csv")).map_err(FvsError::from)?;
    coef.write_record(["term", "coefficient"]).map_err(FvsError::from)?;
    for (term, b) in ds.terms.iter().zip(&fit.coefficients) {
        coef.write_record([term.as_str(), &format!("{b:.16e}")]).map_err(FvsError::from)?;
    }
    coef.flush()?;
    let mut fitted = csv::Writer::from_path(a.out.join("fitted.csv")).map_err(FvsError::from)?;
    fitted.write_record(["row", "observed", "fitted"]).map_err(FvsError::from)?;
    for (i, (y, f)) in ds.y.iter().zip(&fit.fitted).enumerate() {
        fitted
            .write_record([(i + 1).to_string(), format!("{y:.16e}"), format!("{f:.16e}")])
            .map_err(FvsError::from)?;
    }
    fitted.flush()?;
    let text = serde_json::to_string_pretty(&summary).map_err(|e| fatal(e.to_string()))?;
    fs::write(a.out.join("summary.json"), format!("{text}\n"))?;
    print_json(&summary)
}

/// Reads a scenario file, reporting the line, column and offending field on failure.
fn read_scenario(path: &Path) -> Result<SimulationScenario, Failure> {
    let text = fs::read_to_string(path).map_err(|e| fatal(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| fatal(format!("{} line {} column {}: {e}", path.display(), e.line(), e.column())))
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), Failure> {
    let mut scenario = read_scenario(&a.config)?;
    if let Some(seed) = a.seed {
        scenario.seed = seed;
    }
    for w in scenario.validate()? {
        eprintln!("warning: {w}");
    }
    let estimators = match &scenario.estimators {
        Some(names) => names.iter().map(|n| Estimator::by_name(n)).collect::<Result<Vec<_>, _>>()?,
        None => Estimator::defaults_for(scenario.family),
    };
    let report = run_replications(&scenario, &estimators, scenario.seed, a.workers.max(1))?;
    match &a.out {
        Some(path) => report.write_csv(fs::File::create(path)?)?,
        None => report.write_csv(io::stdout().lock())?,
    }
    if let Some(path) = &a.replications_out {
        report.write_replications_csv(fs::File::create(path)?)?;
    }
    let missing = report.n_missing();
    if missing == 0 {
        return Ok(());
    }
    for (r, e) in report.errors.iter().enumerate() {
        if let Some(e) = e {
            eprintln!("replication {r}: {e}");
        }
    }
    Err(Failure { code: EXIT_PARTIAL, message: format!("{missing} estimator cell(s) failed") })
}

#[derive(Serialize)]
struct InvarianceOutput {
    transform: &'static str,
    fvs_max_abs: f64,
    ridge_max_abs: f64,
    ridge_relative: f64,
    ridge_lambda: f64,
    scale: f64,
    tolerance: f64,
    pass: bool,
}

fn cmd_invariance(a: InvarianceArgs) -> Result<(), Failure> {
    let mut rng = RngStream::new(a.seed, 0);
    let (x1, x2, y) = match (&a.data, &a.scenario) {
        (Some(path), None) => {
            let response = a.response.clone().ok_or_else(|| fatal("--response is required with a CSV file"))?;
            let spec = DatasetSpec { response, categorical: a.categorical.clone(), interactions: a.interactions.clone() };
            let table = Table::read(path)?;
            let ds = spec.build(&table)?;
            let x2 = match a.transform {
                TransformArg::Identity => ds.x.clone(),
                TransformArg::Recoding => spec.shifted_references(&table)?.build(&table)?.x,
                TransformArg::GramSchmidtRotation => ds.x.transform(random_rotation(ds.x.p(), &mut rng)?.as_ref())?,
            };
            (ds.x, x2, ds.y)
        }
        (None, Some(path)) => {
            let scenario = read_scenario(path)?;
            scenario.validate()?;
            let inst = generate(&scenario, &mut RngStream::new(a.seed, 1))?;
            let x2 = match a.transform {
                TransformArg::Identity => inst.x.clone(),
                TransformArg::Recoding if scenario.family == Family::Categorical => {
                    inst.x.transform(categorical_recoding(CODING2_REFERENCES)?.as_ref())?
                }
                TransformArg::Recoding => {
                    return Err(fatal("recoding applies to the categorical family; use gram-schmidt-rotation"))
                }
                TransformArg::GramSchmidtRotation => {
                    inst.x.transform(random_rotation(inst.x.p(), &mut rng)?.as_ref())?
                }
            };
            (inst.x, x2, inst.y)
        }
        _ => return Err(fatal("give either a CSV file or --scenario")),
    };
    let lambda = match a.ridge_lambda {
        Some(l) => l,
        None => ridge_cv(&x1, &y, 10, &default_lambda_grid(), true, &mut RngStream::new(a.seed, 2))?.lambda,
    };
    let r = invariance_check(&x1, &x2, &y, &INVARIANCE_GAMMAS, lambda)?;
    let pass = r.fvs_max_abs <= INVARIANCE_TOL * r.scale;
    print_json(&InvarianceOutput {
        transform: match a.transform {
            TransformArg::Identity => "identity",
            TransformArg::Recoding => "recoding",
            TransformArg::GramSchmidtRotation => "gram-schmidt-rotation",
        },
        fvs_max_abs: r.fvs_max_abs,
        ridge_max_abs: r.ridge_max_abs,
        ridge_relative: r.ridge_relative,
        ridge_lambda: lambda,
        scale: r.scale,
        tolerance: INVARIANCE_TOL * r.scale,
        pass,
    })?;
    if pass {
        Ok(())
    } else {
        Err(fatal(format!(
            "shrinkage fitted values moved by {:.3e}, above the tolerance {:.3e}",
            r.fvs_max_abs,
            INVARIANCE_TOL * r.scale
        )))
    }
}
