//! The `rdx` command line: argument parsing, dispatch and rendering.
//!
//! Exit codes: 0 success, 2 usage, 3 data, 4 estimation.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{load_dataset, CutoffPair, Dataset, Design, Schema};
use crate::error::RdError;
use crate::extrapolation::{
    estimate_cutoff_effect, extrapolate_covadj, extrapolate_fuzzy, extrapolate_polybias,
    extrapolation_grid, linspace, pooled_effect, weighted_average_effect, CovAdjResult,
    ExtrapolationResult, FuzzyResult, RDEffect, WeightedEffect,
};
use crate::falsification::{
    global_parallel_test, local_derivative_test, DerivGrid, DerivTestResult, GlobalTrendResult,
    DEFAULT_GLOBAL_ORDER,
};
use crate::fixedeffects::{fe_effect_at, fit_fe_model, slope_equality_test, FEEffect, FEModelFit};
use crate::localrand::{
    local_randomization, lr_sensitivity, Adjustment, LRConfig, Permutations, SensitivityRow,
};
use crate::locfit::{Bandwidth, FitSpec, KernelKind};
use crate::ols::FTest;
use crate::output::{fmt3, fmt_ci, to_json, Table};
use crate::rdplot::{rdplot_bins, PlotTarget, RDPlotData, DEFAULT_BINS_PER_SIDE};
use crate::simulate::{run_monte_carlo, Estimator, SimulationConfig, SimulationSummary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_ESTIMATION: i32 = 4;

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "RDX_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "rdx",
    version,
    about = "Regression discontinuity estimation and extrapolation for multi-cutoff designs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cutoff-specific, pooled and weighted average RD effects.
    Effect(EffectArgs),
    /// Extrapolated effect for the low-cutoff group at one point or a grid.
    Extrapolate(ExtrapolateArgs),
    /// Parallel-trends tests below the low cutoff.
    Falsify(FalsifyArgs),
    /// Linear fixed-effects model and slope equality test.
    Fe(FeArgs),
    /// Local randomization estimate and Berger-Boos p-value.
    Lr(LrArgs),
    /// Monte Carlo study of the extrapolation estimators.
    Simulate(SimulateArgs),
    /// Binned means and global fits for RD plots.
    Rdplot(RdplotArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Triangular,
    Uniform,
    Epanechnikov,
}

impl From<KernelArg> for KernelKind {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Triangular => KernelKind::Triangular,
            KernelArg::Uniform => KernelKind::Uniform,
            KernelArg::Epanechnikov => KernelKind::Epanechnikov,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AdjustmentArg {
    Constant,
    Linear,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "y")]
    pub y: String,
    #[arg(long, default_value = "x")]
    pub x: String,
    #[arg(long, default_value = "c")]
    pub c: String,
    /// Treatment column; synthesized as 1(x >= c) in sharp designs when absent.
    #[arg(long)]
    pub d: Option<String>,
    /// Comma-separated covariate columns (default: every `z1`, `z2`, ...).
    #[arg(long, value_delimiter = ',')]
    pub z: Option<Vec<String>>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long, value_enum, default_value = "triangular")]
    pub kernel: KernelArg,
    /// Local polynomial order.
    #[arg(long, default_value_t = 1)]
    pub order: usize,
    /// `auto` for the MSE-optimal plug-in, or a fixed positive value.
    #[arg(long, default_value = "auto", value_parser = parse_bandwidth)]
    pub bandwidth: Bandwidth,
    /// Confidence level of the intervals.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Write the result here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct PairArgs {
    /// Low cutoff; defaults to the smallest cutoff in a two-cutoff dataset.
    #[arg(long, visible_alias = "low", allow_hyphen_values = true)]
    pub cutoff_low: Option<f64>,
    /// High cutoff; defaults to the largest cutoff in a two-cutoff dataset.
    #[arg(long, visible_alias = "high", allow_hyphen_values = true)]
    pub cutoff_high: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct EffectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
#[command(group(clap::ArgGroup::new("where").required(true).args(["at", "grid"])))]
pub struct ExtrapolateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub pair: PairArgs,
    /// Evaluation point in (low, high].
    #[arg(long, allow_hyphen_values = true)]
    pub at: Option<f64>,
    /// Evenly spaced points `a:b:n`.
    #[arg(long, value_parser = parse_grid, allow_hyphen_values = true)]
    pub grid: Option<Grid>,
    /// Fuzzy design with one-sided noncompliance; reads the `d` column.
    #[arg(long, conflicts_with_all = ["covadj", "polybias_order"])]
    pub fuzzy: bool,
    /// Order of the polynomial bias model (0 is the constant-bias estimator).
    #[arg(long, value_parser = clap::value_parser!(u64).range(0..=2), conflicts_with = "covadj")]
    pub polybias_order: Option<u64>,
    /// Reweight covariate-cell estimates to the low group's covariate mix.
    #[arg(long)]
    pub covadj: bool,
    #[command(flatten)]
    pub fit: FitArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct FalsifyArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub pair: PairArgs,
    /// Order of the global polynomial.
    #[arg(long, default_value_t = DEFAULT_GLOBAL_ORDER)]
    pub global_order: usize,
    /// Also test the intercept shift in the global test.
    #[arg(long)]
    pub joint: bool,
    /// Derivative-test grid `a:b:n` below the low cutoff (default: automatic).
    #[arg(long, value_parser = parse_grid, allow_hyphen_values = true)]
    pub grid: Option<Grid>,
    #[command(flatten)]
    pub fit: FitArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct FeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// One control slope shared by all cutoffs.
    #[arg(long)]
    pub common_slope: bool,
    /// Use raw scores instead of distances to each cutoff.
    #[arg(long)]
    pub uncentered: bool,
    /// Where to evaluate each cutoff's effect, in the fit's score coordinates.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub at: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct LrArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub pair: PairArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub at: f64,
    /// Window sizes (nearest neighbours per window); several give a sensitivity table.
    #[arg(long, value_delimiter = ',', required = true)]
    pub k: Vec<usize>,
    #[arg(long, value_enum, default_value = "constant")]
    pub adjustment: AdjustmentArg,
    #[arg(long, default_value_t = 0.01)]
    pub eta: f64,
    /// Number of random relabelings, or `exhaustive`.
    #[arg(long, default_value = "2000", value_parser = parse_perms)]
    pub perms: Permutations,
    /// Points in the grid over the confidence set for the bias.
    #[arg(long, default_value_t = 100)]
    pub delta_grid: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// JSON configuration; missing keys take the default design.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// sharp, fuzzy, polybias0, polybias1 or polybias2.
    #[arg(long, default_value = "sharp")]
    pub estimator: String,
    #[command(flatten)]
    pub fit: FitArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
#[command(group(clap::ArgGroup::new("target").required(true).args(["cutoff", "pooled"])))]
pub struct RdplotArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Plot units facing this cutoff.
    #[arg(long, allow_hyphen_values = true)]
    pub cutoff: Option<f64>,
    /// Plot all units on the score normalized by their own cutoff.
    #[arg(long)]
    pub pooled: bool,
    #[arg(long, default_value_t = DEFAULT_BINS_PER_SIDE)]
    pub bins: usize,
    /// Order of the global polynomial fit (1 or 2).
    #[arg(long, default_value_t = 1)]
    pub order: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub a: f64,
    pub b: f64,
    pub n: usize,
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        linspace(self.a, self.b, self.n)
    }
}

fn parse_grid(s: &str) -> std::result::Result<Grid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("expected a:b:n, got `{s}`"));
    }
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
    let a = num(parts[0])?;
    let b = num(parts[1])?;
    let n = parts[2]
        .trim()
        .parse::<usize>()
        .map_err(|e| format!("`{}`: {e}", parts[2]))?;
    if n == 0 || !a.is_finite() || !b.is_finite() || (n > 1 && a >= b) {
        return Err(format!("grid `{s}` needs finite a < b and n >= 1"));
    }
    Ok(Grid { a, b, n })
}

fn parse_bandwidth(s: &str) -> std::result::Result<Bandwidth, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Bandwidth::Auto);
    }
    match s.parse::<f64>() {
        Ok(h) if h > 0.0 && h.is_finite() => Ok(Bandwidth::Fixed(h)),
        _ => Err(format!(
            "bandwidth must be `auto` or a positive number, got `{s}`"
        )),
    }
}

fn parse_perms(s: &str) -> std::result::Result<Permutations, String> {
    if s.eq_ignore_ascii_case("exhaustive") {
        return Ok(Permutations::Exhaustive);
    }
    s.parse::<usize>()
        .map(Permutations::Random)
        .map_err(|_| format!("expected a count or `exhaustive`, got `{s}`"))
}

/// Errors surfaced by the command line, mapped onto exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Rd(RdError),
}

impl From<RdError> for CliError {
    fn from(e: RdError) -> Self {
        CliError::Rd(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Rd(e) if e.is_data_error() => EXIT_DATA,
            CliError::Rd(
                RdError::InvalidEta(_)
                | RdError::EstimatorUnknown(_)
                | RdError::UnsupportedOrder(_)
                | RdError::NonpositiveBandwidth(_),
            ) => EXIT_USAGE,
            CliError::Rd(_) => EXIT_ESTIMATION,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.clone(),
            CliError::Rd(e) => e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// A finished command: the serializable report and its table rendering.
struct Rendered {
    json: String,
    table: String,
}

fn render<T: Serialize>(value: &T, table: String) -> CliResult<Rendered> {
    Ok(Rendered {
        json: to_json(value)?,
        table,
    })
}

/// Parses `args` (including the program name) and runs the command, writing
/// results to `out` and diagnostics to `err`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    EXIT_OK
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match thread_cap() {
        Err(e) => Err(e),
        Ok(None) => execute(&cli),
        Ok(Some(n)) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(&cli)),
            Err(e) => Err(CliError::Usage(format!("thread pool: {e}"))),
        },
    }
    .and_then(|(text, path)| match path {
        Some(p) => write_file(&p, &text),
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Rd(RdError::from(e))),
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.exit_code()
        }
    }
}

fn thread_cap() -> CliResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!(
                "{THREADS_ENV} must be a positive integer, got `{v}`"
            ))),
        },
    }
}

/// Runs the command; returns the text to emit and where to write it.
fn execute(cli: &Cli) -> CliResult<(String, Option<PathBuf>)> {
    let (rendered, output) = match &cli.command {
        Command::Effect(a) => (cmd_effect(a)?, &a.output),
        Command::Extrapolate(a) => (cmd_extrapolate(a)?, &a.output),
        Command::Falsify(a) => (cmd_falsify(a)?, &a.output),
        Command::Fe(a) => (cmd_fe(a)?, &a.output),
        Command::Lr(a) => (cmd_lr(a)?, &a.output),
        Command::Simulate(a) => (cmd_simulate(a)?, &a.output),
        Command::Rdplot(a) => (cmd_rdplot(a)?, &a.output),
    };
    let text = match output.format {
        Format::Json => rendered.json,
        Format::Table => rendered.table,
    };
    Ok((text, output.out.clone()))
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| RdError::Io(format!("{}: {e}", path.display())))?;
    Ok(())
}

fn load(a: &DataArgs, design: Design) -> CliResult<Dataset> {
    let schema = Schema {
        y: a.y.clone(),
        x: a.x.clone(),
        c: a.c.clone(),
        d: Some(a.d.clone().unwrap_or_else(|| "d".into())),
        z: a.z.clone(),
    };
    Ok(load_dataset(&a.data, &schema, design)?)
}

fn fit_spec(a: &FitArgs) -> CliResult<FitSpec> {
    let mut spec = FitSpec::new(a.order).kernel(a.kernel.into());
    if let Bandwidth::Fixed(h) = a.bandwidth {
        spec = spec.bandwidth(h);
    }
    spec.validate()?;
    if !(a.level > 0.0 && a.level < 1.0) {
        return Err(CliError::Usage(format!(
            "--level must lie in (0, 1), got {}",
            a.level
        )));
    }
    Ok(spec)
}

fn pair(ds: &Dataset, a: &PairArgs) -> CliResult<CutoffPair> {
    let cuts = ds.cutoffs();
    let (low, high) = match (a.cutoff_low, a.cutoff_high) {
        (Some(l), Some(h)) => (l, h),
        _ if cuts.len() == 2 => (
            a.cutoff_low.unwrap_or(cuts[0]),
            a.cutoff_high.unwrap_or(cuts[1]),
        ),
        _ => {
            return Err(CliError::Usage(format!(
                "dataset has {} cutoffs; pass --cutoff-low and --cutoff-high",
                cuts.len()
            )))
        }
    };
    Ok(CutoffPair::new(ds, low, high)?)
}

fn bw_pair(a: f64, b: f64) -> String {
    format!("{} / {}", fmt3(a), fmt3(b))
}

// effect

#[derive(Debug, Clone, Serialize)]
pub struct EffectReport {
    pub cutoffs: Vec<RDEffect>,
    pub pooled: RDEffect,
    /// Present when the dataset has at least two cutoffs.
    pub weighted: Option<WeightedEffect>,
}

fn cmd_effect(a: &EffectArgs) -> CliResult<Rendered> {
    let ds = load(&a.data, Design::Sharp)?;
    let spec = fit_spec(&a.fit)?;
    let level = a.fit.level;
    let cutoffs = ds
        .cutoffs()
        .par_iter()
        .map(|&c| estimate_cutoff_effect(&ds, c, &spec, level))
        .collect::<Result<Vec<_>, _>>()?;
    let pooled = pooled_effect(&ds, &spec, level)?;
    let weighted = if cutoffs.len() >= 2 {
        Some(weighted_average_effect(&cutoffs, &ds, level)?)
    } else {
        None
    };
    let report = EffectReport {
        cutoffs,
        pooled,
        weighted,
    };
    let mut t = Table::new(["", "Estimate", "RBC CI", "RBC p-value", "Eff. N", "Bw"])
        .titled("RD effects (Eff. N and Bw: left / right)");
    let mut effect_row = |label: String, e: &RDEffect| {
        t.row([
            label,
            fmt3(e.tau),
            fmt_ci(e.ci_rbc.lo, e.ci_rbc.hi),
            fmt3(e.p_value_rbc),
            format!("{} / {}", e.n_eff_left, e.n_eff_right),
            bw_pair(e.h_left, e.h_right),
        ]);
    };
    for e in &report.cutoffs {
        effect_row(format!("Cutoff {}", e.cutoff), e);
    }
    effect_row("Pooled".into(), &report.pooled);
    if let Some(w) = &report.weighted {
        t.row([
            "Weighted".to_string(),
            fmt3(w.estimate),
            fmt_ci(w.ci_rbc.lo, w.ci_rbc.hi),
            fmt3(w.p_value_rbc),
            "-".into(),
            "-".into(),
        ]);
    }
    render(&report, t.render())
}

// extrapolate

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Estimate {
    Sharp(ExtrapolationResult),
    Fuzzy(FuzzyResult),
    Covadj(CovAdjResult),
}

impl Estimate {
    /// The constant- or polynomial-bias result carrying the component fits.
    pub fn extrapolation(&self) -> &ExtrapolationResult {
        match self {
            Estimate::Sharp(r) => r,
            Estimate::Fuzzy(f) => &f.itt,
            Estimate::Covadj(c) => &c.result,
        }
    }

    /// `(tau, ci_rbc, p_value_rbc)` of the reported effect.
    fn headline(&self) -> (f64, crate::locfit::Interval, f64) {
        match self {
            Estimate::Fuzzy(f) => (f.tau, f.ci_rbc, f.p_value_rbc),
            other => {
                let r = other.extrapolation();
                (r.tau, r.ci_rbc, r.p_value_rbc)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtrapolatePoint {
    pub xbar: f64,
    pub result: Option<Estimate>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtrapolateReport {
    pub estimator: String,
    pub low: f64,
    pub high: f64,
    pub level: f64,
    pub points: Vec<ExtrapolatePoint>,
}

fn cmd_extrapolate(a: &ExtrapolateArgs) -> CliResult<Rendered> {
    let design = if a.fuzzy {
        Design::Fuzzy
    } else {
        Design::Sharp
    };
    let ds = load(&a.data, design)?;
    let p = pair(&ds, &a.pair)?;
    let spec = fit_spec(&a.fit)?;
    let level = a.fit.level;
    let s_max = a.polybias_order.unwrap_or(0) as usize;
    let estimator = if a.fuzzy {
        "fuzzy".to_string()
    } else if a.covadj {
        "covadj".to_string()
    } else if s_max > 0 {
        format!("polybias{s_max}")
    } else {
        "sharp".to_string()
    };
    let one = |xbar: f64| -> Result<Estimate, RdError> {
        if a.fuzzy {
            extrapolate_fuzzy(&ds, &p, xbar, &spec, level).map(Estimate::Fuzzy)
        } else if a.covadj {
            extrapolate_covadj(&ds, &p, xbar, &spec, level).map(Estimate::Covadj)
        } else {
            extrapolate_polybias(&ds, &p, xbar, &spec, s_max, level).map(Estimate::Sharp)
        }
    };
    let points = match (&a.at, &a.grid) {
        (Some(xbar), _) => vec![ExtrapolatePoint {
            xbar: *xbar,
            result: Some(one(*xbar)?),
            error: None,
        }],
        (None, Some(g)) if estimator == "sharp" => {
            extrapolation_grid(&ds, &p, &g.points(), &spec, level)?
                .into_iter()
                .map(|gp| ExtrapolatePoint {
                    xbar: gp.xbar,
                    result: gp.result.map(Estimate::Sharp),
                    error: gp.error,
                })
                .collect()
        }
        (None, Some(g)) => g
            .points()
            .par_iter()
            .map(|&xbar| match one(xbar) {
                Ok(r) => ExtrapolatePoint {
                    xbar,
                    result: Some(r),
                    error: None,
                },
                Err(e) => ExtrapolatePoint {
                    xbar,
                    result: None,
                    error: Some(e.to_string()),
                },
            })
            .collect(),
        (None, None) => return Err(CliError::Usage("pass --at or --grid".into())),
    };
    let report = ExtrapolateReport {
        estimator,
        low: p.low,
        high: p.high,
        level,
        points,
    };
    let table = if a.at.is_some() {
        extrapolate_point_table(&report)
    } else {
        extrapolate_grid_table(&report)
    };
    render(&report, table)
}

fn extrapolate_point_table(report: &ExtrapolateReport) -> String {
    let pt = &report.points[0];
    let est = pt
        .result
        .as_ref()
        .expect("single point always has a result");
    let r = est.extrapolation();
    let mut comp = Table::new([
        "Component",
        "Point",
        "Estimate",
        "Std. err.",
        "RBC est.",
        "RBC s.e.",
        "Eff. N",
        "Bw",
    ])
    .titled(format!(
        "Extrapolation ({}) at {} for cutoff {} using cutoff {}",
        report.estimator, pt.xbar, report.low, report.high
    ));
    for c in &r.components {
        comp.row([
            c.name.clone(),
            format!("{}", c.x0),
            fmt3(c.estimate),
            fmt3(c.se),
            fmt3(c.rbc_estimate),
            fmt3(c.rbc_se),
            c.n_eff.to_string(),
            fmt3(c.h),
        ]);
    }
    if let Estimate::Fuzzy(f) = est {
        let c = &f.first_stage;
        comp.row([
            c.name.clone(),
            format!("{}", c.x0),
            fmt3(c.estimate),
            fmt3(c.se),
            fmt3(c.rbc_estimate),
            fmt3(c.rbc_se),
            c.n_eff.to_string(),
            fmt3(c.h),
        ]);
    }
    let (tau, ci, p) = est.headline();
    let mut summary = Table::new(["", "Estimate", "RBC CI", "RBC p-value"]);
    summary.row([
        "Naive difference".to_string(),
        fmt3(r.naive),
        "-".into(),
        "-".into(),
    ]);
    summary.row([
        "Bias at low cutoff".to_string(),
        fmt3(r.bias_low),
        "-".into(),
        "-".into(),
    ]);
    summary.row([
        "Extrapolated effect".to_string(),
        fmt3(tau),
        fmt_ci(ci.lo, ci.hi),
        fmt3(p),
    ]);
    if let Estimate::Covadj(c) = est {
        let mut cells = Table::new(["Cell", "Propensity", "Frequency", "Weight", "Estimate"])
            .titled("Covariate cells");
        for d in &c.cells {
            cells.row([
                d.cell.clone(),
                fmt3(d.propensity),
                fmt3(d.frequency),
                fmt3(d.weight),
                fmt3(d.result.tau),
            ]);
        }
        return format!(
            "{}\n{}\n{}",
            comp.render(),
            summary.render(),
            cells.render()
        );
    }
    format!("{}\n{}", comp.render(), summary.render())
}

fn extrapolate_grid_table(report: &ExtrapolateReport) -> String {
    let mut t =
        Table::new(["x", "Estimate", "RBC CI", "RBC p-value", "Bias at low"]).titled(format!(
            "Extrapolation ({}) for cutoff {} using cutoff {}",
            report.estimator, report.low, report.high
        ));
    for pt in &report.points {
        match (&pt.result, &pt.error) {
            (Some(est), _) => {
                let (tau, ci, p) = est.headline();
                t.row([
                    format!("{}", pt.xbar),
                    fmt3(tau),
                    fmt_ci(ci.lo, ci.hi),
                    fmt3(p),
                    fmt3(est.extrapolation().bias_low),
                ]);
            }
            (None, err) => {
                t.row([
                    format!("{}", pt.xbar),
                    format!("skipped: {}", err.as_deref().unwrap_or("")),
                ]);
            }
        }
    }
    t.render()
}

// falsify

#[derive(Debug, Clone, Serialize)]
pub struct FalsifyReport {
    pub global: GlobalTrendResult,
    pub local: DerivTestResult,
}

fn cmd_falsify(a: &FalsifyArgs) -> CliResult<Rendered> {
    let ds = load(&a.data, Design::Sharp)?;
    let p = pair(&ds, &a.pair)?;
    let spec = fit_spec(&a.fit)?;
    let global = global_parallel_test(&ds, &p, a.global_order, a.joint)?;
    let grid = match &a.grid {
        Some(g) => DerivGrid::Points(g.points()),
        None => DerivGrid::Auto,
    };
    let local = local_derivative_test(&ds, &p, &grid, &spec, a.fit.level)?;
    let mut g = Table::new(["Test", "F", "df", "p-value", "N"]).titled(format!(
        "Global polynomial (order {}) below cutoff {}",
        global.order, p.low
    ));
    g.row([
        if global.joint {
            "Shift and slopes"
        } else {
            "Slopes"
        }
        .to_string(),
        fmt3(global.f_stat),
        format!("{}, {}", global.df_num, global.df_den),
        fmt3(global.p_value),
        global.n_used.to_string(),
    ]);
    let mut l = Table::new(["x", "Difference", "RBC CI", "Reject", "Bw low", "Bw high"])
        .titled("Local derivative differences (low minus high)");
    for o in &local.grid {
        match &o.point {
            Some(d) => l.row([
                fmt3(d.x),
                fmt3(d.diff),
                fmt_ci(d.ci_rbc.lo, d.ci_rbc.hi),
                if d.reject { "yes" } else { "no" }.to_string(),
                fmt3(d.h_low),
                fmt3(d.h_high),
            ]),
            None => l.row([
                fmt3(o.x),
                format!("skipped: {}", o.error.as_deref().unwrap_or("")),
            ]),
        };
    }
    let report = FalsifyReport { global, local };
    render(&report, format!("{}\n{}", g.render(), l.render()))
}

// fe

#[derive(Debug, Clone, Serialize)]
pub struct FeReport {
    pub fit: FEModelFit,
    pub effects: Vec<FEEffect>,
    /// Present when the dataset has at least two cutoffs.
    pub slope_test: Option<FTest>,
}

fn cmd_fe(a: &FeArgs) -> CliResult<Rendered> {
    let ds = load(&a.data, Design::Sharp)?;
    let fit = fit_fe_model(&ds, a.common_slope, !a.uncentered)?;
    let effects = (0..fit.cutoffs.len())
        .map(|j| fe_effect_at(&fit, j, a.at))
        .collect::<Result<Vec<_>, _>>()?;
    let slope_test = if ds.cutoffs().len() >= 2 {
        Some(slope_equality_test(&ds)?)
    } else {
        None
    };
    let mut t = Table::new([
        "Cutoff",
        "Level",
        "Slope",
        "Jump",
        "Slope change",
        "Effect",
        "Std. err.",
    ])
    .titled(format!("Fixed-effects model, effects at {}", a.at));
    for (j, e) in effects.iter().enumerate() {
        let beta = if fit.common_slope {
            fit.beta[0]
        } else {
            fit.beta[j]
        };
        t.row([
            format!("{}", e.cutoff),
            fmt3(fit.gamma[j]),
            fmt3(beta),
            fmt3(fit.delta[j]),
            fmt3(fit.theta[j]),
            fmt3(e.estimate),
            fmt3(e.se),
        ]);
    }
    let mut text = t.render();
    if let Some(s) = &slope_test {
        text.push_str(&format!(
            "\nEqual control slopes: F = {}, df = ({}, {}), p = {}\n",
            fmt3(s.f_stat),
            s.df_num,
            s.df_den,
            fmt3(s.p_value)
        ));
    }
    let report = FeReport {
        fit,
        effects,
        slope_test,
    };
    render(&report, text)
}

// lr

#[derive(Debug, Clone, Serialize)]
pub struct LrReport {
    pub xbar: f64,
    pub low: f64,
    pub high: f64,
    pub rows: Vec<SensitivityRow>,
}

fn cmd_lr(a: &LrArgs) -> CliResult<Rendered> {
    let ds = load(&a.data, Design::Sharp)?;
    let p = pair(&ds, &a.pair)?;
    if a.k.iter().any(|&k| k == 0) {
        return Err(CliError::Usage("--k values must be positive".into()));
    }
    let adjustment = match a.adjustment {
        AdjustmentArg::Constant => Adjustment::Constant,
        AdjustmentArg::Linear => Adjustment::Linear,
    };
    let cfg = LRConfig {
        eta: a.eta,
        perms: a.perms,
        grid: a.delta_grid,
        seed: a.seed,
    };
    let rows = if a.k.len() == 1 {
        let r = local_randomization(&ds, &p, a.at, a.k[0], adjustment, &cfg)?;
        vec![SensitivityRow {
            k: a.k[0],
            result: Some(r),
            error: None,
        }]
    } else {
        lr_sensitivity(&ds, &p, a.at, &a.k, adjustment, &cfg)?
    };
    let mut t =
        Table::new(["k", "Estimate", "Bias", "Neyman p", "p*", "N low", "N xbar"]).titled(format!(
            "Local randomization at {} (cutoffs {} and {})",
            a.at, p.low, p.high
        ));
    for r in &rows {
        match &r.result {
            Some(lr) => t.row([
                r.k.to_string(),
                fmt3(lr.tau_hat),
                fmt3(lr.delta_hat),
                lr.p_neyman.map(fmt3).unwrap_or_else(|| "-".into()),
                lr.bergerboos
                    .as_ref()
                    .map(|b| fmt3(b.p_star))
                    .unwrap_or_else(|| "-".into()),
                format!(
                    "{} / {}",
                    lr.counts.low_control_at_low, lr.counts.high_at_low
                ),
                format!(
                    "{} / {}",
                    lr.counts.low_treated_at_xbar, lr.counts.high_at_xbar
                ),
            ]),
            None => t.row([
                r.k.to_string(),
                format!("skipped: {}", r.error.as_deref().unwrap_or("")),
            ]),
        };
    }
    let report = LrReport {
        xbar: a.at,
        low: p.low,
        high: p.high,
        rows,
    };
    render(&report, t.render())
}

// simulate

fn cmd_simulate(a: &SimulateArgs) -> CliResult<Rendered> {
    let mut cfg = match &a.config {
        Some(path) => SimulationConfig::load(path)?,
        None => SimulationConfig::default(),
    };
    if let Some(n) = a.n {
        cfg = SimulationConfig {
            n,
            n_ell: n / 2,
            ..cfg
        };
    }
    if let Some(r) = a.reps {
        cfg.reps = r;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let estimator: Estimator = a.estimator.parse()?;
    let spec = fit_spec(&a.fit)?;
    let s: SimulationSummary = run_monte_carlo(&cfg, estimator, &spec)?;
    let mut t = Table::new(["", "Value"]).titled(format!(
        "Monte Carlo: {} estimator, N = {}, {} replications (seed {})",
        s.estimator, s.n, s.reps_completed, s.seed
    ));
    t.row(["Target".to_string(), fmt3(s.target)]);
    t.row(["Mean estimate".to_string(), fmt3(s.mean_tau_hat)]);
    t.row(["Bias".to_string(), fmt3(s.bias)]);
    t.row(["Std. dev.".to_string(), fmt3(s.sd)]);
    t.row(["RMSE".to_string(), fmt3(s.rmse)]);
    t.row(["RBC coverage".to_string(), fmt3(s.coverage_rbc)]);
    t.row([
        "Conventional coverage".to_string(),
        fmt3(s.coverage_conventional),
    ]);
    t.row(["Failed replications".to_string(), s.reps_failed.to_string()]);
    let mut c = Table::new(["Component", "Mean Bw", "Mean Eff. N"]);
    for comp in &s.components {
        c.row([
            comp.name.clone(),
            fmt3(comp.mean_h),
            format!("{:.1}", comp.mean_eff_n),
        ]);
    }
    render(&s, format!("{}\n{}", t.render(), c.render()))
}

// rdplot

fn cmd_rdplot(a: &RdplotArgs) -> CliResult<Rendered> {
    let ds = load(&a.data, Design::Sharp)?;
    let target = match a.cutoff {
        Some(c) => PlotTarget::Cutoff(c),
        None => PlotTarget::Pooled,
    };
    let data: RDPlotData = rdplot_bins(&ds, target, a.bins, a.order)?;
    let mut t = Table::new(["Side", "From", "To", "Mean", "Count"]).titled(format!(
        "RD plot bins around {}{}",
        data.cutoff,
        if data.normalized {
            " (normalized score)"
        } else {
            ""
        }
    ));
    for (label, side) in [("left", &data.left), ("right", &data.right)] {
        for b in &side.bins {
            t.row([
                label.to_string(),
                fmt3(b.lo),
                fmt3(b.hi),
                fmt3(b.mean),
                b.count.to_string(),
            ]);
        }
    }
    let coefs = |v: &[f64]| {
        v.iter()
            .map(|c| format!("{c:.6e}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let text = format!(
        "{}\nFit left: [{}]\nFit right: [{}]\n",
        t.render(),
        coefs(&data.left.fit),
        coefs(&data.right.fit)
    );
    render(&data, text)
}
