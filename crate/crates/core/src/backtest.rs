//! Hedging backtests of a volatility swap along simulated paths, and the
//! one-step drift diagnostic for the zero-vanna implied volatility.
//!
//! Smiles along a path come from the mixing formula conditioned on the
//! path's current vol. To keep nested simulation affordable, each rebalance
//! date gets one conditional-smile table on a grid of vol levels, built from
//! a fixed inner sample reused for every level and date. Paths read their
//! smile off the table by interpolation in `ln σ`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adjusted::{AdjustConfig, RealizedState};
use crate::analytics;
use crate::hedge::{self, StripLeg};
use crate::models::{self, mean_and_se, path_rng, Dynamics, ModelError, SvModelSpec};
use crate::quadrature::compensated_sum;
use crate::smile::{MarketSmile, Quote, MIN_QUOTES};
use crate::volswap;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BacktestError {
    #[error("invalid backtest configuration: {0}")]
    Config(String),
    #[error("{failed} of {total} paths failed pricing, above the allowed fraction")]
    TooManyFailures { failed: usize, total: usize },
    #[error("conditional smile table at tau={tau} kept only {kept} strikes")]
    Table { tau: f64, kept: usize },
    #[error("initial pricing failed: {0}")]
    Initial(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Unhedged,
    Strip,
    Varswap1,
    Varswap2,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Unhedged,
        Strategy::Strip,
        Strategy::Varswap1,
        Strategy::Varswap2,
    ];
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unhedged" => Ok(Strategy::Unhedged),
            "strip" => Ok(Strategy::Strip),
            "varswap1" => Ok(Strategy::Varswap1),
            "varswap2" => Ok(Strategy::Varswap2),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BacktestConfig {
    #[serde(rename = "T")]
    pub expiry: f64,
    /// Must start at 0 and stay below `T`.
    pub rebalance_dates: Vec<f64>,
    pub n_paths: usize,
    pub seed: u64,
    /// Outer simulation resolution.
    pub steps_per_year: usize,
    pub inner_paths: usize,
    pub inner_steps: usize,
    pub sigma_nodes: usize,
    pub table_strikes: usize,
    /// Table half width in total standard deviations.
    pub table_width: f64,
    pub adjust: AdjustConfig,
    pub bootstrap_resamples: usize,
    pub max_failure_fraction: f64,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            expiry: 1.0,
            rebalance_dates: uniform_dates(1.0, 250),
            n_paths: 500,
            seed: 2024,
            steps_per_year: 1000,
            inner_paths: 2000,
            inner_steps: 64,
            sigma_nodes: 24,
            table_strikes: 41,
            table_width: 6.0,
            adjust: AdjustConfig::default(),
            bootstrap_resamples: 2000,
            max_failure_fraction: 0.01,
        }
    }
}

/// `count` equally spaced dates on `[0, T)`.
pub fn uniform_dates(expiry: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| expiry * i as f64 / count as f64)
        .collect()
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<(), BacktestError> {
        let bad = |m: &str| Err(BacktestError::Config(m.to_string()));
        if !(self.expiry.is_finite() && self.expiry > 0.0) {
            return bad("T must be positive");
        }
        let d = &self.rebalance_dates;
        if d.first() != Some(&0.0) {
            return bad("rebalance dates must start at 0");
        }
        if !d.windows(2).all(|w| w[0] < w[1]) || *d.last().unwrap() >= self.expiry {
            return bad("rebalance dates must increase and stay below T");
        }
        if self.n_paths < 100 {
            return bad("need at least 100 paths");
        }
        if self.inner_paths < 2 || self.inner_steps < 1 {
            return bad("inner simulation needs at least 2 paths and 1 step");
        }
        if self.steps_per_year < 50 {
            return bad("steps_per_year must be at least 50");
        }
        if self.sigma_nodes < 1 || self.table_strikes < MIN_QUOTES {
            return bad("table needs at least one vol node and five strikes");
        }
        if !(self.table_width > 0.0) {
            return bad("table width must be positive");
        }
        if !(0.0..1.0).contains(&self.max_failure_fraction) {
            return bad("failure fraction must lie in [0, 1)");
        }
        self.adjust
            .validate()
            .map_err(|e| BacktestError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestDiagnostics {
    /// Zero-vanna price at inception from the table smile.
    pub v0: f64,
    pub mean_payoff: f64,
    pub payoff_std_error: f64,
    /// Largest gap between cash-account value and summed position gains.
    pub accounting_residual: f64,
    /// Mean over steps and paths of `Δ(price) − hedge gain`, per step.
    pub mean_tracking_error: f64,
    pub tracking_error_std_error: f64,
    pub excluded_paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub strategy: Strategy,
    pub model: SvModelSpec,
    pub per_path_pnl: Vec<f64>,
    pub mean_pnl: f64,
    pub std_pnl: f64,
    pub variance_reduction: f64,
    pub rebalance_count: usize,
    pub diagnostics: BacktestDiagnostics,
}

/// All four strategies from one set of paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestSuite {
    pub config: BacktestConfig,
    pub reports: Vec<BacktestReport>,
}

impl BacktestSuite {
    pub fn report(&self, strategy: Strategy) -> &BacktestReport {
        self.reports
            .iter()
            .find(|r| r.strategy == strategy)
            .expect("every strategy is reported")
    }
}

/// Conditional smiles on a grid of current vol levels, in log-moneyness.
#[derive(Debug, Clone, PartialEq)]
pub struct SmileTable {
    pub tau: f64,
    /// `log_moneyness[node][strike]`; each node's grid scales with its own
    /// remaining std unless the caller fixes the strikes.
    pub log_moneyness: Vec<Vec<f64>>,
    pub log_sigma: Vec<f64>,
    /// `total_var[node][strike]`.
    pub total_var: Vec<Vec<f64>>,
    /// Inner-sample mean of the remaining integrated variance per node.
    pub remaining_var: Vec<f64>,
}

const INNER_STREAM_SEED: u64 = 0x1BAD_5EED;

impl SmileTable {
    pub fn build(
        spec: &SvModelSpec,
        sigmas: &[f64],
        tau: f64,
        cfg: &BacktestConfig,
    ) -> Result<Self, BacktestError> {
        let (samples, remaining_var) = Self::sample(spec, sigmas, tau, cfg);
        let xs: Vec<Vec<f64>> = remaining_var
            .iter()
            .map(|v| strike_grid(cfg.table_width * v.sqrt(), cfg.table_strikes))
            .collect();
        Self::price(samples, remaining_var, sigmas, tau, &xs)
    }

    /// (M, mixing std, integrated variance) per inner path per node, plus the
    /// node means of the integrated variance.
    #[allow(clippy::type_complexity)]
    fn sample(
        spec: &SvModelSpec,
        sigmas: &[f64],
        tau: f64,
        cfg: &BacktestConfig,
    ) -> (Vec<Vec<(f64, f64, f64)>>, Vec<f64>) {
        let deterministic = spec.is_deterministic();
        let n_inner = if deterministic { 1 } else { cfg.inner_paths };
        let dt = tau / cfg.inner_steps as f64;
        let inner_seed = cfg.seed ^ INNER_STREAM_SEED;
        let rho_bar = (1.0 - spec.rho * spec.rho).sqrt();
        // (m, total std) per inner path, per node
        let samples: Vec<Vec<(f64, f64, f64)>> = sigmas
            .par_iter()
            .map(|&s| {
                (0..n_inner as u64)
                    .map(|i| {
                        let mut rng = path_rng(inner_seed, i);
                        let st = models::simulate_path(spec, s, dt, cfg.inner_steps, &mut rng, None);
                        if deterministic {
                            (1.0, st.integrated_var.sqrt(), st.integrated_var)
                        } else {
                            (st.log_m.exp(), rho_bar * st.left_var.sqrt(), st.integrated_var)
                        }
                    })
                    .collect()
            })
            .collect();
        let remaining_var: Vec<f64> = samples
            .iter()
            .map(|p| mean_and_se(&p.iter().map(|x| x.2).collect::<Vec<_>>()).0)
            .collect();
        (samples, remaining_var)
    }

    /// Same as [`SmileTable::build`] on a caller-chosen log-moneyness grid.
    pub fn build_with_strikes(
        spec: &SvModelSpec,
        sigmas: &[f64],
        tau: f64,
        xs: &[f64],
        cfg: &BacktestConfig,
    ) -> Result<Self, BacktestError> {
        let (samples, remaining_var) = Self::sample(spec, sigmas, tau, cfg);
        let xs = vec![xs.to_vec(); sigmas.len()];
        Self::price(samples, remaining_var, sigmas, tau, &xs)
    }

    /// Keeps only the strikes present in both tables. Meant for tables from
    /// [`SmileTable::build_with_strikes`], whose nodes share one grid.
    pub fn align(&mut self, other: &mut Self) {
        let common: Vec<f64> = self.log_moneyness[0]
            .iter()
            .copied()
            .filter(|x| other.log_moneyness[0].contains(x))
            .collect();
        for t in [self, other] {
            let idx: Vec<usize> = common
                .iter()
                .map(|x| t.log_moneyness[0].iter().position(|y| y == x).unwrap())
                .collect();
            for row in t.total_var.iter_mut().chain(t.log_moneyness.iter_mut()) {
                *row = idx.iter().map(|&i| row[i]).collect();
            }
        }
    }

    fn price(
        samples: Vec<Vec<(f64, f64, f64)>>,
        remaining_var: Vec<f64>,
        sigmas: &[f64],
        tau: f64,
        xs: &[Vec<f64>],
    ) -> Result<Self, BacktestError> {
        let n_k = xs[0].len();
        let priced: Vec<Vec<Option<f64>>> = samples
            .par_iter()
            .zip(xs)
            .map(|(paths, xs)| {
                xs.iter()
                    .map(|&x| {
                        let k = x.exp();
                        let price = compensated_sum(
                            paths
                                .iter()
                                .map(|&(m, sd, _)| models::mixing_otm_price(1.0, k, m, sd)),
                        ) / paths.len() as f64;
                        analytics::implied_vol(price, 1.0, k, tau, k >= 1.0)
                            .ok()
                            .filter(|v| *v > 0.0)
                            .map(|v| v * v * tau)
                    })
                    .collect()
            })
            .collect();
        let keep: Vec<usize> = (0..n_k)
            .filter(|&i| priced.iter().all(|row| row[i].is_some()))
            .collect();
        if keep.len() < MIN_QUOTES {
            return Err(BacktestError::Table {
                tau,
                kept: keep.len(),
            });
        }
        Ok(Self {
            tau,
            log_moneyness: xs
                .iter()
                .map(|row| keep.iter().map(|&i| row[i]).collect())
                .collect(),
            log_sigma: sigmas.iter().map(|s| s.ln()).collect(),
            total_var: priced
                .iter()
                .map(|row| keep.iter().map(|&i| row[i].unwrap()).collect())
                .collect(),
            remaining_var,
        })
    }

    fn weights(&self, sigma: f64) -> (usize, Vec<f64>) {
        lagrange_weights(&self.log_sigma, sigma.max(SIGMA_FLOOR).ln())
    }

    pub fn smile_at(
        &self,
        spot: f64,
        sigma: f64,
        t: f64,
        expiry: f64,
    ) -> Result<MarketSmile, crate::smile::SmileError> {
        let (start, w) = self.weights(sigma);
        let quotes = (0..self.log_moneyness[0].len())
            .map(|i| {
                let (x, var) = w.iter().enumerate().fold((0.0, 0.0), |(x, v), (j, wj)| {
                    (
                        x + wj * self.log_moneyness[start + j][i],
                        v + wj * self.total_var[start + j][i],
                    )
                });
                Quote::new(spot * x.exp(), (var.max(0.0) / self.tau).sqrt())
            })
            .collect();
        MarketSmile::new_unchecked_coverage(spot, t, expiry, quotes)
    }

    pub fn remaining_at(&self, sigma: f64) -> f64 {
        let (start, w) = self.weights(sigma);
        w.iter()
            .enumerate()
            .map(|(j, wj)| wj * self.remaining_var[start + j])
            .sum()
    }
}

fn strike_grid(half: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| -half + 2.0 * half * i as f64 / (n - 1) as f64)
        .collect()
}

/// Four-point (or fewer) Lagrange weights at `x`, clamped to the node range.
fn lagrange_weights(nodes: &[f64], x: f64) -> (usize, Vec<f64>) {
    let n = nodes.len();
    if n == 1 {
        return (0, vec![1.0]);
    }
    let x = x.clamp(nodes[0], nodes[n - 1]);
    let m = n.min(4);
    let i = nodes.partition_point(|&v| v <= x).clamp(1, n - 1) - 1;
    let start = i.saturating_sub((m - 1) / 2).min(n - m);
    let pts = &nodes[start..start + m];
    let w = (0..m)
        .map(|j| {
            (0..m)
                .filter(|&l| l != j)
                .map(|l| (x - pts[l]) / (pts[j] - pts[l]))
                .product()
        })
        .collect();
    (start, w)
}

/// Vol levels below this share the lowest node; Heston paths can sit at 0.
const SIGMA_FLOOR: f64 = 1e-3;

/// Log-spaced vol nodes covering `values`.
fn sigma_grid(values: impl Iterator<Item = f64>, count: usize) -> Vec<f64> {
    let (lo, hi) = values.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let (lo, hi) = (lo.max(SIGMA_FLOOR), hi.max(SIGMA_FLOOR));
    if count == 1 || hi <= lo * (1.0 + 1e-12) {
        return vec![0.5 * (lo + hi)];
    }
    let (a, b) = ((lo * 0.98).ln(), (hi * 1.02).ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Outer path sampled at the rebalance dates and at `T`.
#[derive(Debug, Clone)]
struct OuterPath {
    spot: Vec<f64>,
    sigma: Vec<f64>,
    accrued: Vec<f64>,
}

fn simulate_outer(spec: &SvModelSpec, cfg: &BacktestConfig, index: u64) -> OuterPath {
    let mut dates = cfg.rebalance_dates.clone();
    dates.push(cfg.expiry);
    let rho_bar = (1.0 - spec.rho * spec.rho).sqrt();
    let mut rng = path_rng(cfg.seed, index);
    let mut out = OuterPath {
        spot: vec![spec.spot0],
        sigma: vec![spec.initial_vol()],
        accrued: vec![0.0],
    };
    let mut state = spec.state_from_vol(spec.initial_vol());
    let var_of = |s: f64| spec.variance(s);
    let mut log_s = spec.spot0.ln();
    let mut accrued = 0.0;
    for w in dates.windows(2) {
        let n = ((w[1] - w[0]) * cfg.steps_per_year as f64).ceil().max(1.0) as usize;
        let dt = (w[1] - w[0]) / n as f64;
        let sqrt_dt = dt.sqrt();
        for _ in 0..n {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            let var = var_of(state);
            log_s += var.sqrt() * sqrt_dt * (spec.rho * z1 + rho_bar * z2) - 0.5 * var * dt;
            state = step(spec, state, dt, sqrt_dt, z1);
            accrued += 0.5 * (var + var_of(state)) * dt;
        }
        out.spot.push(log_s.exp());
        out.sigma.push(var_of(state).sqrt());
        out.accrued.push(accrued);
    }
    out
}

fn step(spec: &SvModelSpec, state: f64, dt: f64, sqrt_dt: f64, z: f64) -> f64 {
    spec.step(state, dt, sqrt_dt, z)
}

/// `E[∫ₜᵀσ²du | σₜ = sigma]`, closed form where available.
fn remaining_variance(spec: &SvModelSpec, sigma: f64, tau: f64, table: &SmileTable) -> f64 {
    match spec.dynamics {
        Dynamics::Heston { .. } | Dynamics::LognormalSabr { .. } => {
            models::expected_integrated_variance(&spec.with_initial_vol(sigma), tau)
                .expect("closed form exists")
        }
        Dynamics::ThreeHalves { .. } => table.remaining_at(sigma),
    }
}

/// Positions carried from one rebalance date to the next.
#[derive(Debug, Clone, Default)]
struct Book {
    legs: Vec<StripLeg>,
    strip_units: f64,
    strip_value: f64,
    shares: f64,
    varswap_units: [f64; 2],
    var_mark: f64,
    price: f64,
    spot: f64,
    // gains per strategy: strip, varswap1, varswap2
    gains: [f64; 3],
    cash: f64,
    tracking: Vec<f64>,
    failed: bool,
}

struct DateState<'a> {
    spec: &'a SvModelSpec,
    cfg: &'a BacktestConfig,
    table: &'a SmileTable,
    t: f64,
}

fn rebalance(book: &mut Book, path: &OuterPath, k: usize, ctx: &DateState) -> Result<(), String> {
    let cfg = ctx.cfg;
    let expiry = cfg.expiry;
    let sqrt_t = expiry.sqrt();
    let (s, sigma, accrued) = (path.spot[k], path.sigma[k], path.accrued[k]);
    let tau = expiry - ctx.t;
    let smile = ctx
        .table
        .smile_at(s, sigma, ctx.t, expiry)
        .map_err(|e| e.to_string())?;
    let realized = RealizedState::new(ctx.t, expiry, accrued).map_err(|e| e.to_string())?;
    let priced =
        volswap::price_seasoned(&smile, &realized, &cfg.adjust).map_err(|e| e.to_string())?;
    let plan = hedge::plan_from(
        &smile,
        &realized,
        &cfg.adjust,
        &priced.adjusted,
        priced.zero_vanna.clone(),
    )
    .map_err(|e| e.to_string())?;
    let var_mark = (accrued + remaining_variance(ctx.spec, sigma, tau, ctx.table)) / expiry;
    if k > 0 {
        let old_strip_now = hedge::strip_value(&smile, &book.legs);
        settle(book, old_strip_now, s, var_mark, priced.price);
    }
    // new positions
    let units = plan.notional / sqrt_t;
    let shares = -units * plan.delta;
    book.cash -= units * plan.diagnostics.strip_value + shares * s;
    book.legs = plan.strip;
    book.strip_units = units;
    book.strip_value = plan.diagnostics.strip_value;
    book.shares = shares;
    book.varswap_units = [
        plan.varswap[0].ratio * sqrt_t,
        plan.varswap[1].ratio * sqrt_t,
    ];
    book.var_mark = var_mark;
    book.price = priced.price;
    book.spot = s;
    Ok(())
}

/// Books the gains from the last rebalance to now and unwinds the strip and
/// share positions into cash.
fn settle(book: &mut Book, strip_now: f64, spot: f64, var_mark: f64, price: f64) {
    let strip_gain = book.strip_units * (strip_now - book.strip_value);
    let share_gain = book.shares * (spot - book.spot);
    book.gains[0] += strip_gain + share_gain;
    let dv = var_mark - book.var_mark;
    book.gains[1] += book.varswap_units[0] * dv;
    book.gains[2] += book.varswap_units[1] * dv;
    book.tracking.push((price - book.price) - (strip_gain + share_gain));
    book.cash += book.strip_units * strip_now + book.shares * spot;
    book.strip_units = 0.0;
    book.shares = 0.0;
}

fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = compensated_sum(xs.iter().copied()) / n;
    (compensated_sum(xs.iter().map(|x| (x - mean) * (x - mean))) / (n - 1.0)).sqrt()
}

pub fn run_backtests(spec: &SvModelSpec, cfg: &BacktestConfig) -> Result<BacktestSuite, BacktestError> {
    spec.validate()?;
    cfg.validate()?;
    let expiry = cfg.expiry;
    let outer: Vec<OuterPath> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| simulate_outer(spec, cfg, i))
        .collect();
    let mut books: Vec<Book> = vec![Book::default(); cfg.n_paths];
    let mut v0 = f64::NAN;
    for (k, &t) in cfg.rebalance_dates.iter().enumerate() {
        let nodes =
            sigma_grid(outer.iter().map(|p| p.sigma[k]), cfg.sigma_nodes);
        let table = SmileTable::build(spec, &nodes, expiry - t, cfg)?;
        let ctx = DateState {
            spec,
            cfg,
            table: &table,
            t,
        };
        books.par_iter_mut().zip(&outer).for_each(|(book, path)| {
            if book.failed {
                return;
            }
            if let Err(e) = rebalance(book, path, k, &ctx) {
                log::warn!("path excluded at t={t}: {e}");
                book.failed = true;
            }
        });
        if k == 0 {
            v0 = books
                .iter()
                .find(|b| !b.failed)
                .map(|b| b.price)
                .ok_or_else(|| BacktestError::Initial("every path failed at inception".into()))?;
        }
    }
    let n_dates = cfg.rebalance_dates.len();
    let mut payoffs = Vec::with_capacity(cfg.n_paths);
    let mut pnl: [Vec<f64>; 4] = Default::default();
    let mut tracking = Vec::new();
    let mut accounting_residual: f64 = 0.0;
    let mut excluded = 0;
    for (book, path) in books.iter_mut().zip(&outer) {
        if book.failed {
            excluded += 1;
            continue;
        }
        let s_t = path.spot[n_dates];
        let realized_total = path.accrued[n_dates];
        let payoff = (realized_total / expiry).sqrt();
        let strip_t = compensated_sum(
            book.legs
                .iter()
                .map(|l| l.weight * (s_t - l.strike).max(0.0)),
        );
        settle(book, strip_t, s_t, realized_total / expiry, payoff);
        accounting_residual = accounting_residual.max((book.cash - book.gains[0]).abs());
        let liability = payoff - v0;
        pnl[0].push(-liability);
        pnl[1].push(book.gains[0] - liability);
        pnl[2].push(book.gains[1] - liability);
        pnl[3].push(book.gains[2] - liability);
        payoffs.push(payoff);
        tracking.extend_from_slice(&book.tracking);
    }
    if excluded as f64 > cfg.max_failure_fraction * cfg.n_paths as f64 {
        return Err(BacktestError::TooManyFailures {
            failed: excluded,
            total: cfg.n_paths,
        });
    }
    let (mean_payoff, payoff_se) = mean_and_se(&payoffs);
    let (mean_track, track_se) = mean_and_se(&tracking);
    let diagnostics = BacktestDiagnostics {
        v0,
        mean_payoff,
        payoff_std_error: payoff_se,
        accounting_residual,
        mean_tracking_error: mean_track,
        tracking_error_std_error: track_se,
        excluded_paths: excluded,
    };
    let std_unhedged = std_dev(&pnl[0]);
    let reports = Strategy::ALL
        .iter()
        .zip(pnl)
        .map(|(&strategy, per_path)| {
            let (mean, _) = mean_and_se(&per_path);
            let sd = std_dev(&per_path);
            BacktestReport {
                strategy,
                model: *spec,
                mean_pnl: mean,
                std_pnl: sd,
                variance_reduction: if sd > 0.0 { std_unhedged / sd } else { f64::INFINITY },
                rebalance_count: n_dates,
                per_path_pnl: per_path,
                diagnostics: diagnostics.clone(),
            }
        })
        .collect();
    Ok(BacktestSuite {
        config: cfg.clone(),
        reports,
    })
}

pub fn run_backtest(
    spec: &SvModelSpec,
    strategy: Strategy,
    cfg: &BacktestConfig,
) -> Result<BacktestReport, BacktestError> {
    let suite = run_backtests(spec, cfg)?;
    Ok(suite.report(strategy).clone())
}

/// Paired bootstrap of `std(b) − std(a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapTest {
    pub observed: f64,
    /// 5% quantile of the bootstrap distribution.
    pub lower: f64,
    pub upper: f64,
    /// `lower > 0`: `std(a) < std(b)` at one-sided 95%.
    pub confirmed: bool,
}

pub fn bootstrap_std_gap(a: &[f64], b: &[f64], resamples: usize, seed: u64) -> GapTest {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let mut stats: Vec<f64> = (0..resamples as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = path_rng(seed, r);
            let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let ra: Vec<f64> = idx.iter().map(|&i| a[i]).collect();
            let rb: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
            std_dev(&rb) - std_dev(&ra)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let q = |p: f64| stats[((p * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    let lower = q(0.05);
    GapTest {
        observed: std_dev(b) - std_dev(a),
        lower,
        upper: q(0.95),
        confirmed: lower > 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub mean_change: f64,
    pub std_error: f64,
    /// `½σ²/(Iᴴ₋√τ)·dτ`.
    pub expected_change: f64,
    /// `(mean − expected)/std_error`.
    pub residual: f64,
    pub initial_total_std: f64,
    pub dt: f64,
    pub n_paths: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftConfig {
    #[serde(rename = "T")]
    pub expiry: f64,
    pub inner_paths: usize,
    pub inner_steps: usize,
    pub sigma_nodes: usize,
    pub table_strikes: usize,
    pub table_width: f64,
    pub adjust: AdjustConfig,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            expiry: 1.0,
            inner_paths: 20_000,
            inner_steps: 64,
            sigma_nodes: 16,
            table_strikes: 61,
            table_width: 6.0,
            adjust: AdjustConfig::default(),
        }
    }
}

/// One-step Monte Carlo of the change in the fixed-strike adjusted implied
/// total std at the initial zero-vanna strike, for a fresh swap.
pub fn drift_diagnostic(
    spec: &SvModelSpec,
    n_paths: usize,
    dt: f64,
    seed: u64,
) -> Result<DriftReport, BacktestError> {
    drift_diagnostic_with(spec, n_paths, dt, seed, &DriftConfig::default())
}

pub fn drift_diagnostic_with(
    spec: &SvModelSpec,
    n_paths: usize,
    dt: f64,
    seed: u64,
    dcfg: &DriftConfig,
) -> Result<DriftReport, BacktestError> {
    spec.validate()?;
    if !(dt > 0.0 && dt <= 1.0 / 250.0) {
        return Err(BacktestError::Config("dt must lie in (0, 1/250]".into()));
    }
    if n_paths < 2 {
        return Err(BacktestError::Config("need at least two paths".into()));
    }
    let expiry = dcfg.expiry;
    let table_cfg = BacktestConfig {
        expiry,
        seed,
        inner_paths: dcfg.inner_paths,
        inner_steps: dcfg.inner_steps,
        sigma_nodes: dcfg.sigma_nodes,
        table_strikes: dcfg.table_strikes,
        table_width: dcfg.table_width,
        adjust: dcfg.adjust,
        ..BacktestConfig::default()
    };
    let s0 = spec.spot0;
    let sigma0 = spec.initial_vol();
    let var0 = sigma0 * sigma0;
    let rho_bar = (1.0 - spec.rho * spec.rho).sqrt();
    let state0 = spec.state_from_vol(sigma0);
    let steps: Vec<(f64, f64)> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            let sq = dt.sqrt();
            let s = s0 * (sigma0 * sq * (spec.rho * z1 + rho_bar * z2) - 0.5 * var0 * dt).exp();
            let next = step(spec, state0, dt, sq, z1);
            let sigma = spec.variance(next).sqrt();
            (s, sigma)
        })
        .collect();

    // both tables share strikes and nodes so that grid effects cancel in the difference
    let ref_std = models::expected_integrated_variance(spec, expiry)
        .unwrap_or(var0 * expiry)
        .sqrt();
    let xs = strike_grid(dcfg.table_width * ref_std, dcfg.table_strikes);
    let mut nodes = sigma_grid(steps.iter().map(|x| x.1), dcfg.sigma_nodes);
    nodes.push(sigma0);
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    let mut table0 = SmileTable::build_with_strikes(spec, &nodes, expiry, &xs, &table_cfg)?;
    let tau1 = expiry - dt;
    let mut table1 = SmileTable::build_with_strikes(spec, &nodes, tau1, &xs, &table_cfg)?;
    table0.align(&mut table1);
    let smile0 = table0
        .smile_at(s0, sigma0, 0.0, expiry)
        .map_err(|e| BacktestError::Initial(e.to_string()))?;
    let realized = RealizedState::fresh(expiry);
    let priced = volswap::price_seasoned(&smile0, &realized, &dcfg.adjust)
        .map_err(|e| BacktestError::Initial(e.to_string()))?;
    let zv = priced.zero_vanna.clone();
    let legs = hedge::option_strip_weights(&smile0, &realized, &zv, &dcfg.adjust)
        .map_err(|e| BacktestError::Initial(e.to_string()))?;
    // read both ends off the strip the same way so interpolation error cancels
    let omega0 = analytics::implied_vol(
        hedge::strip_value(&smile0, &legs),
        s0,
        zv.strike,
        expiry,
        true,
    )
    .map_err(|e| BacktestError::Initial(e.to_string()))?
        * expiry.sqrt();

    let changes: Vec<f64> = steps
        .par_iter()
        .map(|&(s, sigma)| {
            let smile = table1.smile_at(s, sigma, dt, expiry).ok()?;
            let value = hedge::strip_value(&smile, &legs);
            let vol = analytics::implied_vol(value, s, zv.strike, tau1, true).ok()?;
            Some(vol * tau1.sqrt() - omega0)
        })
        .collect::<Option<Vec<f64>>>()
        .ok_or_else(|| BacktestError::Initial("strip inversion failed after one step".into()))?;
    let (mean, se) = mean_and_se(&changes);
    let expected = -0.5 * var0 * dt / omega0;
    Ok(DriftReport {
        mean_change: mean,
        std_error: se,
        expected_change: expected,
        residual: (mean - expected) / se,
        initial_total_std: omega0,
        dt,
        n_paths,
    })
}

/// Black-Scholes drift check for a flat vol `vol` with accrued variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsDriftCheck {
    /// `d(Iᴴ₋√τ)/dt` from differentiating `√(A + I²τ)`.
    pub analytic_rate: f64,
    /// `−½σ²/(Iᴴ₋√τ)`.
    pub formula_rate: f64,
    /// Finite difference of the fixed strip's implied total std through the
    /// pricing pipeline.
    pub pipeline_rate: f64,
}

pub fn bs_drift_check(
    vol: f64,
    accrued_var: f64,
    t: f64,
    expiry: f64,
    dt: f64,
) -> Result<BsDriftCheck, BacktestError> {
    let tau = expiry - t;
    if !(vol > 0.0 && tau > dt && dt > 0.0 && accrued_var >= 0.0) {
        return Err(BacktestError::Config("need vol > 0 and 0 < dt < T - t".into()));
    }
    let omega = (accrued_var + vol * vol * tau).sqrt();
    let analytic_rate = -vol * vol / (2.0 * omega);
    let formula_rate = -0.5 * vol * vol / omega;
    let flat = |tt: f64| {
        let quotes = (0..121)
            .map(|i| Quote::new(100.0 * (-6.0 + 0.1 * i as f64).exp(), vol))
            .collect();
        MarketSmile::new_unchecked_coverage(100.0, tt, expiry, quotes)
    };
    let err = |e: String| BacktestError::Initial(e);
    let smile = flat(t).map_err(|e| err(e.to_string()))?;
    let realized = RealizedState::new(t, expiry, accrued_var).map_err(|e| err(e.to_string()))?;
    let cfg = AdjustConfig::default();
    let zv = volswap::price_seasoned(&smile, &realized, &cfg)
        .map_err(|e| err(e.to_string()))?
        .zero_vanna;
    let legs = hedge::option_strip_weights(&smile, &realized, &zv, &cfg)
        .map_err(|e| err(e.to_string()))?;
    let later = flat(t + dt).map_err(|e| err(e.to_string()))?;
    let value = hedge::strip_value(&later, &legs);
    let tau1 = tau - dt;
    let vol1 = analytics::implied_vol(value, 100.0, zv.strike, tau1, true)
        .map_err(|e| err(e.to_string()))?;
    Ok(BsDriftCheck {
        analytic_rate,
        formula_rate,
        pipeline_rate: (vol1 * tau1.sqrt() - zv.total_std) / dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lagrange_reproduces_cubics() {
        let nodes: Vec<f64> = (0..7).map(|i| 0.3 * i as f64).collect();
        let f = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x * x;
        for x in [0.0, 0.1, 0.75, 1.3, 1.8] {
            let (s, w) = lagrange_weights(&nodes, x);
            let v: f64 = w.iter().enumerate().map(|(j, wj)| wj * f(nodes[s + j])).sum();
            assert!((v - f(x)).abs() < 1e-12);
        }
        assert_eq!(lagrange_weights(&[0.4], 9.0), (0, vec![1.0]));
    }

    #[test]
    fn bs_drift_formula_is_exact() {
        for (vol, acc, t) in [(0.2, 0.0, 0.0), (0.3, 0.02, 0.4), (0.5, 0.1, 0.9)] {
            let c = bs_drift_check(vol, acc, t, 1.0, 1e-4).unwrap();
            assert!((c.analytic_rate - c.formula_rate).abs() < 1e-12);
            assert!((c.pipeline_rate - c.formula_rate).abs() < 1e-3 * c.formula_rate.abs());
        }
    }

    #[test]
    fn pipeline_drift_residual_shrinks_with_dt() {
        let err = |dt| {
            let c = bs_drift_check(0.25, 0.03, 0.5, 1.0, dt).unwrap();
            (c.pipeline_rate - c.formula_rate).abs()
        };
        let (a, b) = (err(4e-3), err(1e-3));
        assert!(b < 0.4 * a, "{a} {b}");
    }

    #[test]
    fn bootstrap_detects_obvious_gap() {
        let mut rng = path_rng(1, 0);
        let a: Vec<f64> = (0..400).map(|_| rng.gen::<f64>() - 0.5).collect();
        let b: Vec<f64> = a.iter().map(|x| 3.0 * x).collect();
        assert!(bootstrap_std_gap(&a, &b, 500, 3).confirmed);
        assert!(!bootstrap_std_gap(&b, &a, 500, 3).confirmed);
    }

    #[test]
    fn config_validation() {
        let mut cfg = BacktestConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.rebalance_dates = vec![0.1, 0.5];
        assert!(cfg.validate().is_err());
        cfg.rebalance_dates = vec![0.0, 1.0];
        assert!(cfg.validate().is_err());
        let cfg = BacktestConfig {
            n_paths: 10,
            ..BacktestConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
