//! Command-line front end. `run` does the work and returns a [`CliError`]
//! whose [`CliError::exit_code`] the binary reports.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::adjusted::{AdjustConfig, AdjustedError, ConvolutionScheme, RealizedState};
use crate::backtest::{self, BacktestConfig, BacktestError, GapTest, Strategy};
use crate::hedge::{self, HedgeError, HedgePlan};
use crate::io::{self, IoError, SmileMeta};
use crate::models::{self, ModelError, SvModelSpec};
use crate::smile::{MarketSmile, SmileError};
use crate::volswap::{self, TermStructure, VolSwapError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error on {path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::File { .. } => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<SmileError> for CliError {
    fn from(e: SmileError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<AdjustedError> for CliError {
    fn from(e: AdjustedError) -> Self {
        match e {
            AdjustedError::Realized(_)
            | AdjustedError::Config(_)
            | AdjustedError::Mismatch { .. }
            | AdjustedError::Smile(_) => CliError::Validation(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<VolSwapError> for CliError {
    fn from(e: VolSwapError) -> Self {
        match e {
            VolSwapError::Adjusted(a) => a.into(),
            VolSwapError::TermStructure(_) => CliError::Validation(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<HedgeError> for CliError {
    fn from(e: HedgeError) -> Self {
        match e {
            HedgeError::Adjusted(a) => a.into(),
            HedgeError::VolSwap(v) => v.into(),
            HedgeError::Order(_) | HedgeError::Consistency => CliError::Validation(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Domain(_) | ModelError::Config(_) => CliError::Validation(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<BacktestError> for CliError {
    fn from(e: BacktestError) -> Self {
        match e {
            BacktestError::Config(_) => CliError::Validation(e.to_string()),
            BacktestError::Model(m) => m.into(),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "volswap", version, about = "Seasoned volatility swap pricing and hedging")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Price a seasoned volatility swap from a smile.
    Price(PriceArgs),
    /// Hedge plan: delta, option strip and variance-swap ratios.
    Hedge(HedgeArgs),
    /// Simulate a model and write its smile as CSV.
    Simulate(SimulateArgs),
    /// Backtest the hedging strategies along simulated paths.
    Backtest(BacktestArgs),
    /// Run the built-in exactness self-tests.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Panels,
    GaussHermite,
}

/// Quadrature and grid overrides shared by the pricing commands.
#[derive(Debug, Clone, Args)]
pub struct AdjustArgs {
    /// Convolution quadrature.
    #[arg(long, value_enum, default_value = "panels")]
    pub scheme: SchemeArg,
    /// Points per panel, or Gauss–Hermite nodes.
    #[arg(long, default_value_t = 8)]
    pub nodes: usize,
    /// Strikes in the adjusted smile grid.
    #[arg(long, default_value_t = 41)]
    pub grid_points: usize,
    /// Grid half width in adjusted total standard deviations.
    #[arg(long, default_value_t = 6.0)]
    pub grid_halfwidth: f64,
    /// Minimum d- coverage of the adjusted grid on each side.
    #[arg(long, default_value_t = 4.5)]
    pub min_dminus_span: f64,
    /// Wing-weight fraction above which a warning is raised.
    #[arg(long, default_value_t = 1e-3)]
    pub wing_tolerance: f64,
}

impl AdjustArgs {
    pub fn config(&self) -> Result<AdjustConfig, CliError> {
        let scheme = match self.scheme {
            SchemeArg::Panels => ConvolutionScheme::Panels {
                points_per_panel: self.nodes,
            },
            SchemeArg::GaussHermite => ConvolutionScheme::GaussHermite { nodes: self.nodes },
        };
        let cfg = AdjustConfig {
            scheme,
            grid_points: self.grid_points,
            grid_halfwidth: self.grid_halfwidth,
            min_dminus_span: self.min_dminus_span,
            wing_tolerance: self.wing_tolerance,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SmileArgs {
    /// Smile CSV with header `strike,implied_vol`.
    #[arg(long)]
    pub smile: PathBuf,
    /// JSON sidecar with `spot`, `t` and `T`.
    #[arg(long)]
    pub meta: PathBuf,
    /// Accrued realized variance `∫₀ᵗσ²du`.
    #[arg(long, default_value_t = 0.0)]
    pub accrued_var: f64,
    /// Valuation time, overriding the sidecar.
    #[arg(long)]
    pub t: Option<f64>,
    /// Expiry, overriding the sidecar.
    #[arg(long = "T")]
    pub expiry: Option<f64>,
    #[command(flatten)]
    pub adjust: AdjustArgs,
    /// Output file instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PriceArgs {
    #[command(flatten)]
    pub input: SmileArgs,
}

#[derive(Debug, Clone, Args)]
pub struct HedgeArgs {
    #[command(flatten)]
    pub input: SmileArgs,
    /// Variance-swap hedge order reported as `varswap_ratio`.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub order: u8,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Model spec JSON.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub t: f64,
    #[arg(long = "T", default_value_t = 1.0)]
    pub expiry: f64,
    #[arg(long, default_value_t = 250)]
    pub steps_per_year: usize,
    /// Number of log-spaced strikes.
    #[arg(long, default_value_t = 61)]
    pub strikes: usize,
    /// Strike range in expected total standard deviations.
    #[arg(long, default_value_t = 6.0)]
    pub width: f64,
    /// Smile CSV output instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the matching JSON sidecar here.
    #[arg(long)]
    pub meta_out: Option<PathBuf>,
    /// Also write the binary path panel here (descriptor at `<file>.json`).
    #[arg(long)]
    pub panel_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BacktestArgs {
    /// Model spec JSON.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub paths: usize,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    /// Number of equally spaced rebalance dates over the swap life.
    #[arg(long, default_value_t = 250)]
    pub rebalance: usize,
    #[arg(long = "T", default_value_t = 1.0)]
    pub expiry: f64,
    /// Report a single strategy instead of all four.
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long, default_value_t = 1000)]
    pub steps_per_year: usize,
    /// Inner paths per conditional smile table.
    #[arg(long, default_value_t = 2000)]
    pub inner_paths: usize,
    #[arg(long, default_value_t = 64)]
    pub inner_steps: usize,
    /// Vol levels per conditional smile table.
    #[arg(long, default_value_t = 24)]
    pub sigma_nodes: usize,
    #[arg(long, default_value_t = 2000)]
    pub bootstrap: usize,
    #[command(flatten)]
    pub adjust: AdjustArgs,
    /// Report JSON output instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-path P&L CSV for plotting.
    #[arg(long)]
    pub histogram_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CheckArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn emit(out: &mut dyn Write, file: Option<&Path>, text: &str) -> Result<(), CliError> {
    match file {
        Some(p) => write_file(p, text.as_bytes()),
        None => out.write_all(text.as_bytes()).map_err(|source| CliError::File {
            path: PathBuf::from("<stdout>"),
            source,
        }),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn load_inputs(args: &SmileArgs) -> Result<(MarketSmile, RealizedState, SmileMeta), CliError> {
    let quotes = io::parse_smile_csv(&read(&args.smile)?)?;
    let mut meta = io::parse_meta_json(&read(&args.meta)?)?;
    if let Some(t) = args.t {
        meta.t = t;
    }
    if let Some(e) = args.expiry {
        meta.expiry = e;
    }
    let smile = MarketSmile::new(meta.spot, meta.t, meta.expiry, quotes)?;
    let realized = RealizedState::new(meta.t, meta.expiry, args.accrued_var)?;
    Ok((smile, realized, meta))
}

#[derive(Debug, Serialize)]
struct PriceReport {
    command: &'static str,
    meta: SmileMeta,
    accrued_var: f64,
    config: AdjustConfig,
    /// Annualised volatility swap price.
    price: f64,
    zero_vanna_strike: f64,
    adjusted_vol: f64,
    adjusted_total_std: f64,
    /// Annualised variance swap strike `V²`.
    varswap_strike: f64,
    convexity: f64,
    convexity_correction: f64,
    warnings: Vec<crate::adjusted::Warning>,
}

fn cmd_price(args: &PriceArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = args.input.adjust.config()?;
    let (smile, realized, meta) = load_inputs(&args.input)?;
    let priced = volswap::price_seasoned(&smile, &realized, &cfg)?;
    let order1 = hedge::varswap_hedge_ratio(&priced.adjusted, &priced.zero_vanna, 1)?;
    let zv = &priced.zero_vanna;
    let report = PriceReport {
        command: "price",
        meta,
        accrued_var: realized.accrued_var,
        config: cfg,
        price: priced.price,
        zero_vanna_strike: zv.strike,
        adjusted_vol: zv.vol,
        adjusted_total_std: zv.total_std,
        varswap_strike: order1.varswap_strike_sq / realized.expiry,
        convexity: order1.convexity,
        convexity_correction: order1.convexity_correction,
        warnings: zv.warnings.clone(),
    };
    emit(out, args.input.out.as_deref(), &to_json(&report))
}

#[derive(Debug, Serialize)]
struct HedgeReport {
    command: &'static str,
    meta: SmileMeta,
    accrued_var: f64,
    config: AdjustConfig,
    order: u8,
    price: f64,
    varswap_ratio: f64,
    plan: HedgePlan,
}

fn cmd_hedge(args: &HedgeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = args.input.adjust.config()?;
    let (smile, realized, meta) = load_inputs(&args.input)?;
    let priced = volswap::price_seasoned(&smile, &realized, &cfg)?;
    let plan = hedge::plan_from(&smile, &realized, &cfg, &priced.adjusted, priced.zero_vanna.clone())?;
    let ratio = plan.varswap[usize::from(args.order) - 1].ratio;
    let report = HedgeReport {
        command: "hedge",
        meta,
        accrued_var: realized.accrued_var,
        config: cfg,
        order: args.order,
        price: priced.price,
        varswap_ratio: ratio,
        plan,
    };
    emit(out, args.input.out.as_deref(), &to_json(&report))
}

fn cmd_simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = io::parse_model_spec(&read(&args.model)?)?;
    if args.strikes < crate::smile::MIN_QUOTES || !(args.width > 0.0) {
        return Err(CliError::Validation(format!(
            "need at least {} strikes and a positive width",
            crate::smile::MIN_QUOTES
        )));
    }
    if args.paths == 0 {
        return Err(CliError::Validation("need at least one path".into()));
    }
    let set = if args.panel_out.is_some() {
        models::simulate_with_panels(&spec, args.t, args.expiry, args.steps_per_year, args.paths, args.seed)?
    } else {
        models::simulate(&spec, args.t, args.expiry, args.steps_per_year, args.paths, args.seed)?
    };
    let strikes = models::default_mc_strikes(&spec, args.expiry - args.t, args.strikes, args.width);
    let mc = models::mc_smile(&set, &strikes)?;
    if let Some(p) = &args.meta_out {
        write_file(p, to_json(&io::smile_meta(&mc.smile)).as_bytes())?;
    }
    if let Some(p) = &args.panel_out {
        write_file(p, &io::encode_panel(&set))?;
        let mut desc_path = p.clone().into_os_string();
        desc_path.push(".json");
        write_file(Path::new(&desc_path), to_json(&io::descriptor(&set)).as_bytes())?;
    }
    emit(out, args.out.as_deref(), &io::smile_csv(&mc.smile))
}

#[derive(Debug, Serialize)]
struct GapLine {
    lower: &'static str,
    higher: &'static str,
    test: GapTest,
}

#[derive(Debug, Serialize)]
struct BacktestOutput {
    command: &'static str,
    model: SvModelSpec,
    config: BacktestConfig,
    reports: Vec<backtest::BacktestReport>,
    std_gaps: Vec<GapLine>,
}

fn cmd_backtest(args: &BacktestArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = io::parse_model_spec(&read(&args.model)?)?;
    let only: Option<Strategy> = args
        .strategy
        .as_deref()
        .map(str::parse)
        .transpose()
        .map_err(CliError::Validation)?;
    if args.rebalance == 0 {
        return Err(CliError::Validation("need at least one rebalance date".into()));
    }
    let cfg = BacktestConfig {
        expiry: args.expiry,
        rebalance_dates: backtest::uniform_dates(args.expiry, args.rebalance),
        n_paths: args.paths,
        seed: args.seed,
        steps_per_year: args.steps_per_year,
        inner_paths: args.inner_paths,
        inner_steps: args.inner_steps,
        sigma_nodes: args.sigma_nodes,
        adjust: args.adjust.config()?,
        bootstrap_resamples: args.bootstrap.max(2),
        ..BacktestConfig::default()
    };
    let suite = backtest::run_backtests(&spec, &cfg)?;
    let pnl = |s: Strategy| &suite.report(s).per_path_pnl;
    let pairs = [
        (Strategy::Strip, Strategy::Varswap2, "strip", "varswap2"),
        (Strategy::Varswap2, Strategy::Varswap1, "varswap2", "varswap1"),
        (Strategy::Varswap1, Strategy::Unhedged, "varswap1", "unhedged"),
        (Strategy::Strip, Strategy::Unhedged, "strip", "unhedged"),
    ];
    let std_gaps = pairs
        .iter()
        .enumerate()
        .map(|(i, &(a, b, la, lb))| GapLine {
            lower: la,
            higher: lb,
            test: backtest::bootstrap_std_gap(
                pnl(a),
                pnl(b),
                cfg.bootstrap_resamples,
                cfg.seed.wrapping_add(i as u64 + 1),
            ),
        })
        .collect();
    if let Some(p) = &args.histogram_out {
        let mut csv = String::from("path,unhedged,strip,varswap1,varswap2\n");
        for i in 0..pnl(Strategy::Unhedged).len() {
            let row: Vec<String> = Strategy::ALL.iter().map(|&s| format!("{:e}", pnl(s)[i])).collect();
            csv.push_str(&format!("{i},{}\n", row.join(",")));
        }
        write_file(p, csv.as_bytes())?;
    }
    let reports = suite
        .reports
        .iter()
        .filter(|r| only.is_none_or(|s| s == r.strategy))
        .cloned()
        .collect();
    let output = BacktestOutput {
        command: "backtest",
        model: spec,
        config: cfg,
        reports,
        std_gaps,
    };
    emit(out, args.out.as_deref(), &to_json(&output))
}

#[derive(Debug, Serialize)]
struct CheckReport {
    command: &'static str,
    passed: bool,
    term_structure_cases: usize,
    term_structure_max_error: f64,
    term_structure_tolerance: f64,
    gaussian_points: usize,
    gaussian_max_error: f64,
    gaussian_tolerance: f64,
}

fn cmd_check(args: &CheckArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = AdjustConfig::default();
    let cases: [(&[f64], &[f64], f64); 4] = [
        (&[1.0], &[0.2], 0.0),
        (&[0.3, 0.7, 1.0], &[0.1, 0.45, 0.25], 0.5),
        (&[0.5, 1.0], &[0.6, 0.05], 0.9),
        (&[0.2, 0.4, 0.6, 0.8, 1.0], &[0.3, 0.2, 0.5, 0.15, 0.4], 0.1),
    ];
    let mut term_max: f64 = 0.0;
    for (ends, vols, t) in cases {
        let term = TermStructure::new(ends.to_vec(), vols.to_vec())?;
        let tau = 1.0 - t;
        let vol = (term.integrated_variance(t, 1.0) / tau).sqrt();
        let quotes = (0..121)
            .map(|i| crate::smile::Quote::new(100.0 * (-6.0 + 0.1 * i as f64).exp(), vol))
            .collect();
        let smile = MarketSmile::new_unchecked_coverage(100.0, t, 1.0, quotes)?;
        let realized = RealizedState::new(t, 1.0, term.integrated_variance(0.0, t))?;
        let price = volswap::seasoned_volswap_price(&smile, &realized, &cfg)?;
        let exact = volswap::bs_exact_seasoned_price(&term, t, 1.0)?;
        term_max = term_max.max((price - exact).abs());
    }
    let mut gauss_max: f64 = 0.0;
    for i in 0..21 {
        for j in 0..21 {
            let (lhs, rhs) =
                volswap::gaussian_identity_check(-3.0 + 0.3 * i as f64, -3.0 + 0.3 * j as f64);
            gauss_max = gauss_max.max((lhs - rhs).abs());
        }
    }
    let report = CheckReport {
        command: "check",
        passed: term_max < 1e-6 && gauss_max < 1e-10,
        term_structure_cases: cases.len(),
        term_structure_max_error: term_max,
        term_structure_tolerance: 1e-6,
        gaussian_points: 441,
        gaussian_max_error: gauss_max,
        gaussian_tolerance: 1e-10,
    };
    emit(out, args.out.as_deref(), &to_json(&report))?;
    if report.passed {
        Ok(())
    } else {
        Err(CliError::Numerical("self-test tolerances exceeded".into()))
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Price(a) => cmd_price(a, out),
        Command::Hedge(a) => cmd_hedge(a, out),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Backtest(a) => cmd_backtest(a, out),
        Command::Check(a) => cmd_check(a, out),
    }
}

/// Thread count from `VOLSWAP_THREADS`, if set.
pub fn threads_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var("VOLSWAP_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Validation(format!(
                "VOLSWAP_THREADS must be a positive integer, got `{v}`"
            ))),
        },
    }
}
