//! Stochastic-volatility path engines and the Monte Carlo oracles built on
//! them.
//!
//! Only the volatility is simulated. Spot enters through the mixing
//! representation: conditional on a vol path, `S_T` is lognormal around
//! `S·M` with variance `(1−ρ²)∫σ²du`, where
//! `M = exp(ρ∫σdW − ½ρ²∫σ²du)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adjusted::RealizedState;
use crate::analytics;
use crate::quadrature::compensated_sum;
use crate::smile::{MarketSmile, Quote, SmileError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model parameter: {0}")]
    Domain(String),
    #[error("invalid simulation request: {0}")]
    Config(String),
    #[error("only {kept} strikes survived implied-vol inversion")]
    TooFewStrikes { kept: usize },
    #[error(transparent)]
    Smile(#[from] SmileError),
}

/// Volatility dynamics. Heston and 3/2 are written for the variance `v = σ²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum Dynamics {
    /// `dv = κ(θ − v)dt + ξ√v dW`
    Heston {
        kappa: f64,
        theta: f64,
        xi: f64,
        v0: f64,
    },
    /// `dσ = ασ dW`
    LognormalSabr { alpha: f64, sigma0: f64 },
    /// `dv = κv(θ − v)dt + ξv^{3/2} dW`
    ThreeHalves {
        kappa: f64,
        theta: f64,
        xi: f64,
        v0: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvModelSpec {
    pub dynamics: Dynamics,
    pub rho: f64,
    pub spot0: f64,
}

fn positive(name: &str, v: f64) -> Result<(), ModelError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ModelError::Domain(format!("{name} must be positive, got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<(), ModelError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(ModelError::Domain(format!(
            "{name} must be non-negative, got {v}"
        )))
    }
}

impl SvModelSpec {
    pub fn heston(kappa: f64, theta: f64, xi: f64, v0: f64, rho: f64) -> Self {
        Self {
            dynamics: Dynamics::Heston {
                kappa,
                theta,
                xi,
                v0,
            },
            rho,
            spot0: 100.0,
        }
    }

    pub fn sabr(alpha: f64, sigma0: f64, rho: f64) -> Self {
        Self {
            dynamics: Dynamics::LognormalSabr { alpha, sigma0 },
            rho,
            spot0: 100.0,
        }
    }

    pub fn three_halves(kappa: f64, theta: f64, xi: f64, v0: f64, rho: f64) -> Self {
        Self {
            dynamics: Dynamics::ThreeHalves {
                kappa,
                theta,
                xi,
                v0,
            },
            rho,
            spot0: 100.0,
        }
    }

    /// Vol of vol may be zero; that case is the deterministic limit.
    pub fn validate(&self) -> Result<(), ModelError> {
        positive("spot0", self.spot0)?;
        if !(self.rho.is_finite() && self.rho.abs() < 1.0) {
            return Err(ModelError::Domain(format!(
                "rho must lie in (-1, 1), got {}",
                self.rho
            )));
        }
        match self.dynamics {
            Dynamics::Heston {
                kappa,
                theta,
                xi,
                v0,
            }
            | Dynamics::ThreeHalves {
                kappa,
                theta,
                xi,
                v0,
            } => {
                positive("kappa", kappa)?;
                positive("theta", theta)?;
                positive("v0", v0)?;
                non_negative("xi", xi)
            }
            Dynamics::LognormalSabr { alpha, sigma0 } => {
                positive("sigma0", sigma0)?;
                non_negative("alpha", alpha)
            }
        }
    }

    /// `2κθ/ξ²` for Heston.
    pub fn feller_ratio(&self) -> Option<f64> {
        match self.dynamics {
            Dynamics::Heston {
                kappa, theta, xi, ..
            } => Some(2.0 * kappa * theta / (xi * xi)),
            _ => None,
        }
    }

    pub fn initial_vol(&self) -> f64 {
        match self.dynamics {
            Dynamics::Heston { v0, .. } | Dynamics::ThreeHalves { v0, .. } => v0.sqrt(),
            Dynamics::LognormalSabr { sigma0, .. } => sigma0,
        }
    }

    pub fn with_initial_vol(&self, sigma: f64) -> Self {
        let mut out = *self;
        match &mut out.dynamics {
            Dynamics::Heston { v0, .. } | Dynamics::ThreeHalves { v0, .. } => *v0 = sigma * sigma,
            Dynamics::LognormalSabr { sigma0, .. } => *sigma0 = sigma,
        }
        out
    }

    pub fn with_spot(&self, spot0: f64) -> Self {
        Self { spot0, ..*self }
    }

    /// Whether the vol path is deterministic.
    pub fn is_deterministic(&self) -> bool {
        match self.dynamics {
            Dynamics::Heston { xi, .. } | Dynamics::ThreeHalves { xi, .. } => xi == 0.0,
            Dynamics::LognormalSabr { alpha, .. } => alpha == 0.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.dynamics {
            Dynamics::Heston { .. } => "heston",
            Dynamics::LognormalSabr { .. } => "lognormal_sabr",
            Dynamics::ThreeHalves { .. } => "three_halves",
        }
    }

    /// One variance step from `v` (or vol step for SABR); returns the new
    /// state given the driving normal.
    #[inline]
    pub(crate) fn step(&self, state: f64, dt: f64, sqrt_dt: f64, z: f64) -> f64 {
        match self.dynamics {
            Dynamics::Heston {
                kappa, theta, xi, ..
            } => {
                let vp = state.max(0.0);
                state + kappa * (theta - vp) * dt + xi * vp.sqrt() * sqrt_dt * z
            }
            Dynamics::ThreeHalves {
                kappa, theta, xi, ..
            } => {
                let vp = state.max(0.0);
                state + kappa * vp * (theta - vp) * dt + xi * vp * vp.sqrt() * sqrt_dt * z
            }
            Dynamics::LognormalSabr { alpha, .. } => {
                state * (alpha * sqrt_dt * z - 0.5 * alpha * alpha * dt).exp()
            }
        }
    }

    #[inline]
    pub(crate) fn state_from_vol(&self, sigma: f64) -> f64 {
        match self.dynamics {
            Dynamics::LognormalSabr { .. } => sigma,
            _ => sigma * sigma,
        }
    }

    /// Variance implied by a state, with full truncation.
    #[inline]
    pub(crate) fn variance(&self, state: f64) -> f64 {
        match self.dynamics {
            Dynamics::LognormalSabr { .. } => state * state,
            _ => state.max(0.0),
        }
    }
}

/// Closed-form `E[∫₀^τ σ²du]` from the spec's initial state, where known.
pub fn expected_integrated_variance(spec: &SvModelSpec, tau: f64) -> Option<f64> {
    match spec.dynamics {
        Dynamics::Heston {
            kappa, theta, v0, ..
        } => Some(theta * tau + (v0 - theta) * (-(-kappa * tau).exp_m1()) / kappa),
        Dynamics::LognormalSabr { alpha, sigma0 } => {
            let a2 = alpha * alpha;
            Some(if a2 * tau < 1e-12 {
                sigma0 * sigma0 * tau * (1.0 + 0.5 * a2 * tau)
            } else {
                sigma0 * sigma0 * (a2 * tau).exp_m1() / a2
            })
        }
        Dynamics::ThreeHalves { xi, theta, v0, .. } if xi == 0.0 && v0 == theta => {
            Some(theta * tau)
        }
        Dynamics::ThreeHalves { .. } => None,
    }
}

/// Statistics of one simulated vol path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathStats {
    /// Trapezoid `∫σ²du`.
    pub integrated_var: f64,
    /// Left-point `Σσ²Δu`, consistent with the mixing weight.
    pub left_var: f64,
    pub log_m: f64,
    pub terminal_sigma: f64,
}

/// Simulates one path with `n_steps` steps of size `dt`. `sigma_out`, if
/// supplied, receives `n_steps + 1` vol samples.
pub fn simulate_path(
    spec: &SvModelSpec,
    sigma0: f64,
    dt: f64,
    n_steps: usize,
    rng: &mut ChaCha8Rng,
    mut sigma_out: Option<&mut Vec<f64>>,
) -> PathStats {
    let sqrt_dt = dt.sqrt();
    let rho = spec.rho;
    let mut state = spec.state_from_vol(sigma0);
    let mut var = spec.variance(state);
    let mut integrated = 0.0;
    let mut left = 0.0;
    let mut log_m = 0.0;
    if let Some(out) = sigma_out.as_deref_mut() {
        out.push(var.sqrt());
    }
    for _ in 0..n_steps {
        let z: f64 = StandardNormal.sample(rng);
        let sigma = var.sqrt();
        log_m += rho * sigma * sqrt_dt * z - 0.5 * rho * rho * var * dt;
        left += var * dt;
        state = spec.step(state, dt, sqrt_dt, z);
        let next = spec.variance(state);
        integrated += 0.5 * (var + next) * dt;
        var = next;
        if let Some(out) = sigma_out.as_deref_mut() {
            out.push(var.sqrt());
        }
    }
    PathStats {
        integrated_var: integrated,
        left_var: left,
        log_m,
        terminal_sigma: var.sqrt(),
    }
}

pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    pub spec: SvModelSpec,
    pub t: f64,
    #[serde(rename = "T")]
    pub expiry: f64,
    pub steps_per_year: usize,
    pub seed: u64,
    pub time_grid: Vec<f64>,
    /// Per-path σ at each grid time, when requested.
    pub sigma_paths: Option<Vec<Vec<f64>>>,
    pub integrated_var: Vec<f64>,
    pub left_var: Vec<f64>,
    pub mixing_m: Vec<f64>,
    pub mixing_vol: Vec<f64>,
    pub terminal_sigma: Vec<f64>,
}

impl PathSet {
    pub fn n_paths(&self) -> usize {
        self.integrated_var.len()
    }

    pub fn tau(&self) -> f64 {
        self.expiry - self.t
    }
}

fn check_request(
    spec: &SvModelSpec,
    t: f64,
    expiry: f64,
    steps_per_year: usize,
    n_paths: usize,
) -> Result<usize, ModelError> {
    spec.validate()?;
    if n_paths == 0 {
        return Err(ModelError::Config("need at least one path".into()));
    }
    if steps_per_year < 50 {
        return Err(ModelError::Config(format!(
            "steps_per_year {steps_per_year} is below 50"
        )));
    }
    if !(t.is_finite() && t >= 0.0 && expiry.is_finite() && expiry > t) {
        return Err(ModelError::Config(format!("need 0 <= t < T, got t={t}, T={expiry}")));
    }
    Ok(((expiry - t) * steps_per_year as f64).ceil().max(1.0) as usize)
}

/// Paths on `[t, T]` started from the spec's initial vol.
pub fn simulate(
    spec: &SvModelSpec,
    t: f64,
    expiry: f64,
    steps_per_year: usize,
    n_paths: usize,
    seed: u64,
) -> Result<PathSet, ModelError> {
    simulate_inner(spec, t, expiry, steps_per_year, n_paths, seed, false)
}

/// As [`simulate`], also keeping every σ path.
pub fn simulate_with_panels(
    spec: &SvModelSpec,
    t: f64,
    expiry: f64,
    steps_per_year: usize,
    n_paths: usize,
    seed: u64,
) -> Result<PathSet, ModelError> {
    simulate_inner(spec, t, expiry, steps_per_year, n_paths, seed, true)
}

fn simulate_inner(
    spec: &SvModelSpec,
    t: f64,
    expiry: f64,
    steps_per_year: usize,
    n_paths: usize,
    seed: u64,
    keep: bool,
) -> Result<PathSet, ModelError> {
    let n_steps = check_request(spec, t, expiry, steps_per_year, n_paths)?;
    let tau = expiry - t;
    let dt = tau / n_steps as f64;
    let sigma0 = spec.initial_vol();
    let results: Vec<(PathStats, Option<Vec<f64>>)> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i);
            let mut panel = keep.then(|| Vec::with_capacity(n_steps + 1));
            let stats = simulate_path(spec, sigma0, dt, n_steps, &mut rng, panel.as_mut());
            (stats, panel)
        })
        .collect();
    let rho_bar = (1.0 - spec.rho * spec.rho).sqrt();
    let mut set = PathSet {
        spec: *spec,
        t,
        expiry,
        steps_per_year,
        seed,
        time_grid: (0..=n_steps)
            .map(|i| if i == n_steps { expiry } else { t + dt * i as f64 })
            .collect(),
        sigma_paths: keep.then(|| Vec::with_capacity(n_paths)),
        integrated_var: Vec::with_capacity(n_paths),
        left_var: Vec::with_capacity(n_paths),
        mixing_m: Vec::with_capacity(n_paths),
        mixing_vol: Vec::with_capacity(n_paths),
        terminal_sigma: Vec::with_capacity(n_paths),
    };
    for (stats, panel) in results {
        set.integrated_var.push(stats.integrated_var);
        set.left_var.push(stats.left_var);
        set.mixing_m.push(stats.log_m.exp());
        set.mixing_vol.push(rho_bar * (stats.left_var / tau).sqrt());
        set.terminal_sigma.push(stats.terminal_sigma);
        if let (Some(all), Some(p)) = (set.sigma_paths.as_mut(), panel) {
            all.push(p);
        }
    }
    Ok(set)
}

/// Mean and standard error, summed in a fixed order.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = compensated_sum(xs.iter().copied()) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = compensated_sum(xs.iter().map(|x| (x - mean) * (x - mean))) / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct McSmile {
    pub smile: MarketSmile,
    /// Out-of-the-money option prices per surviving strike.
    pub prices: Vec<f64>,
    pub price_std_errors: Vec<f64>,
    /// Price standard error divided by vega.
    pub vol_std_errors: Vec<f64>,
    pub dropped: Vec<f64>,
}

/// Mixing price of the out-of-the-money option at `strike` for one path.
#[inline]
pub fn mixing_otm_price(spot: f64, strike: f64, m: f64, total_std: f64) -> f64 {
    let fwd = spot * m;
    if strike >= spot {
        analytics::call_total(fwd, strike, total_std)
    } else {
        analytics::put_total(fwd, strike, total_std)
    }
}

/// Market smile at `paths.t` via the mixing formula.
pub fn mc_smile(paths: &PathSet, strikes: &[f64]) -> Result<McSmile, ModelError> {
    let spot = paths.spec.spot0;
    let tau = paths.tau();
    for &k in strikes {
        if !(k.is_finite() && k > 0.0) {
            return Err(ModelError::Config(format!("invalid strike {k}")));
        }
    }
    let deterministic = paths.spec.is_deterministic();
    let priced: Vec<(f64, Option<(f64, f64, f64)>)> = strikes
        .par_iter()
        .map(|&k| {
            let (price, se) = if deterministic {
                // all randomness is in M, whose law is known in closed form
                let total = paths.integrated_var[0].sqrt();
                let p = mixing_otm_price(spot, k, 1.0, total);
                (p, 0.0)
            } else {
                let samples: Vec<f64> = paths
                    .mixing_m
                    .iter()
                    .zip(&paths.mixing_vol)
                    .map(|(&m, &v)| mixing_otm_price(spot, k, m, v * tau.sqrt()))
                    .collect();
                mean_and_se(&samples)
            };
            let vol = analytics::implied_vol(price, spot, k, tau, k >= spot).ok();
            (k, vol.filter(|v| *v > 0.0).map(|v| (v, price, se)))
        })
        .collect();
    let mut quotes = Vec::new();
    let mut prices = Vec::new();
    let mut price_se = Vec::new();
    let mut vol_se = Vec::new();
    let mut dropped = Vec::new();
    for (k, res) in priced {
        match res {
            Some((v, p, s)) => {
                let vega = analytics::bs_greeks(&analytics::BsInputs::call(spot, k, v, tau))
                    .map(|g| g.vega)
                    .unwrap_or(0.0);
                quotes.push(Quote::new(k, v));
                prices.push(p);
                price_se.push(s);
                vol_se.push(if vega > 0.0 { s / vega } else { f64::INFINITY });
            }
            None => {
                log::warn!("dropping strike {k}: implied vol inversion failed");
                dropped.push(k);
            }
        }
    }
    if quotes.len() < crate::smile::MIN_QUOTES {
        return Err(ModelError::TooFewStrikes { kept: quotes.len() });
    }
    let smile = MarketSmile::new(spot, paths.t, paths.expiry, quotes)?;
    Ok(McSmile {
        smile,
        prices,
        price_std_errors: price_se,
        vol_std_errors: vol_se,
        dropped,
    })
}

/// Log-spaced strikes spanning `±width` standard deviations of the
/// expected total variance.
pub fn default_mc_strikes(spec: &SvModelSpec, tau: f64, n: usize, width: f64) -> Vec<f64> {
    let var = expected_integrated_variance(spec, tau)
        .unwrap_or_else(|| spec.initial_vol().powi(2) * tau);
    let sd = var.sqrt();
    (0..n)
        .map(|i| {
            let x = -width * sd + 2.0 * width * sd * i as f64 / (n - 1) as f64;
            spec.spot0 * x.exp()
        })
        .collect()
}

/// Fair seasoned volatility swap `E[√((A + ∫ₜᵀσ²)/T)]` with standard error.
pub fn mc_volswap(paths: &PathSet, realized: &RealizedState) -> (f64, f64) {
    let samples: Vec<f64> = paths
        .integrated_var
        .iter()
        .map(|iv| ((realized.accrued_var + iv) / realized.expiry).sqrt())
        .collect();
    mean_and_se(&samples)
}

/// Fair seasoned variance swap `E[(A + ∫ₜᵀσ²)/T]` with standard error.
pub fn mc_varswap(paths: &PathSet, realized: &RealizedState) -> (f64, f64) {
    let samples: Vec<f64> = paths
        .integrated_var
        .iter()
        .map(|iv| (realized.accrued_var + iv) / realized.expiry)
        .collect();
    mean_and_se(&samples)
}

/// Joint Euler simulation of spot and vol, pricing a call directly.
/// Used as an independent oracle for [`mc_smile`].
pub fn joint_simulation_call(
    spec: &SvModelSpec,
    tau: f64,
    strike: f64,
    steps_per_year: usize,
    n_paths: usize,
    seed: u64,
) -> Result<(f64, f64), ModelError> {
    let n_steps = check_request(spec, 0.0, tau, steps_per_year, n_paths)?;
    let dt = tau / n_steps as f64;
    let sqrt_dt = dt.sqrt();
    let rho_bar = (1.0 - spec.rho * spec.rho).sqrt();
    let payoffs: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed ^ 0x006a_6f69_6e74, i);
            let mut state = spec.state_from_vol(spec.initial_vol());
            let mut log_s = spec.spot0.ln();
            for _ in 0..n_steps {
                let z1: f64 = StandardNormal.sample(&mut rng);
                let z2: f64 = StandardNormal.sample(&mut rng);
                let var = spec.variance(state);
                log_s += var.sqrt() * sqrt_dt * (spec.rho * z1 + rho_bar * z2) - 0.5 * var * dt;
                state = spec.step(state, dt, sqrt_dt, z1);
            }
            (log_s.exp() - strike).max(0.0)
        })
        .collect();
    Ok(mean_and_se(&payoffs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heston() -> SvModelSpec {
        SvModelSpec::heston(2.0, 0.04, 0.5, 0.04, -0.7)
    }

    #[test]
    fn validation() {
        assert!(heston().validate().is_ok());
        assert!(SvModelSpec::heston(2.0, 0.04, 0.0, 0.04, 0.0).validate().is_ok());
        assert!(SvModelSpec::heston(-1.0, 0.04, 0.5, 0.04, 0.0).validate().is_err());
        assert!(SvModelSpec::sabr(0.5, 0.2, 1.0).validate().is_err());
        assert!(SvModelSpec::sabr(0.5, 0.0, 0.0).validate().is_err());
        assert!((heston().feller_ratio().unwrap() - 0.64).abs() < 1e-12);
        assert!(simulate(&heston(), 0.0, 1.0, 10, 10, 1).is_err());
        assert!(simulate(&heston(), 0.0, 1.0, 100, 0, 1).is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = heston();
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"variant\":\"heston\""));
        let back: SvModelSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        let bad = json.replace("\"xi\"", "\"vol_of_vol\"");
        assert!(serde_json::from_str::<SvModelSpec>(&bad).is_err());
    }

    #[test]
    fn deterministic_heston() {
        let spec = SvModelSpec::heston(2.0, 0.04, 0.0, 0.04, -0.5);
        let set = simulate(&spec, 0.0, 1.0, 250, 64, 3).unwrap();
        for iv in &set.integrated_var {
            assert!((iv - 0.04).abs() < 1e-12);
        }
        let smile = mc_smile(&set, &default_mc_strikes(&spec, 1.0, 21, 4.0)).unwrap();
        for q in smile.smile.quotes() {
            assert!((q.implied_vol - 0.2).abs() < 1e-10);
        }
    }

    #[test]
    fn sabr_without_vol_of_vol_is_lognormal_m() {
        let (rho, s0): (f64, f64) = (-0.5, 0.25);
        let spec = SvModelSpec::sabr(0.0, s0, rho);
        let set = simulate(&spec, 0.0, 2.0, 100, 20_000, 9).unwrap();
        let logs: Vec<f64> = set.mixing_m.iter().map(|m| m.ln()).collect();
        let (mean, _) = mean_and_se(&logs);
        let var = compensated_sum(logs.iter().map(|x| (x - mean).powi(2))) / (logs.len() - 1) as f64;
        let target = rho * rho * s0 * s0 * 2.0;
        assert!((mean + 0.5 * target).abs() < 4.0 * (target / 20_000.0).sqrt());
        assert!((var / target - 1.0).abs() < 0.05);
        assert!(set.terminal_sigma.iter().all(|s| (s - s0).abs() < 1e-15));
    }

    #[test]
    fn martingale_mixing_weight() {
        let set = simulate(&heston(), 0.0, 1.0, 100, 100_000, 11).unwrap();
        let (mean, se) = mean_and_se(&set.mixing_m);
        assert!((mean - 1.0).abs() < 4.0 * se, "{mean} ± {se}");
        assert!(set.mixing_m.iter().all(|m| *m > 0.0));
        assert!(set.integrated_var.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn seed_determinism() {
        let a = simulate_with_panels(&heston(), 0.0, 0.5, 100, 200, 5).unwrap();
        let b = simulate_with_panels(&heston(), 0.0, 0.5, 100, 200, 5).unwrap();
        assert_eq!(a, b);
        let c = simulate(&heston(), 0.0, 0.5, 100, 200, 6).unwrap();
        assert_ne!(a.integrated_var, c.integrated_var);
        let panel = a.sigma_paths.as_ref().unwrap();
        assert_eq!(panel[0].len(), a.time_grid.len());
    }

    #[test]
    fn heston_expected_variance() {
        let spec = SvModelSpec::heston(2.0, 0.04, 0.5, 0.09, -0.7);
        let set = simulate(&spec, 0.0, 1.0, 250, 50_000, 2).unwrap();
        let (m, se) = mc_varswap(&set, &RealizedState::fresh(1.0));
        let exact = expected_integrated_variance(&spec, 1.0).unwrap();
        assert!((m - exact).abs() < 3.0 * se, "{m} vs {exact} ± {se}");
        let (vs, _) = mc_volswap(&set, &RealizedState::fresh(1.0));
        assert!(m >= vs * vs);
    }

    #[test]
    fn sabr_expected_variance() {
        let spec = SvModelSpec::sabr(0.8, 0.2, -0.5);
        let exact = expected_integrated_variance(&spec, 1.0).unwrap();
        assert!((exact - 0.04 * (0.64f64.exp() - 1.0) / 0.64).abs() < 1e-15);
        let set = simulate(&spec, 0.0, 1.0, 250, 50_000, 8).unwrap();
        let (m, se) = mc_varswap(&set, &RealizedState::fresh(1.0));
        assert!((m - exact).abs() < 3.0 * se, "{m} vs {exact} ± {se}");
    }

    #[test]
    fn volswap_dominated_by_realized_leg() {
        let set = simulate(&heston(), 0.9, 1.0, 250, 1000, 4).unwrap();
        let r = RealizedState::new(0.9, 1.0, 1e4).unwrap();
        let (p, _) = mc_volswap(&set, &r);
        assert!((p / 100.0 - 1.0).abs() < 1e-5);
    }

    #[test]
    fn zero_correlation_smile_is_symmetric() {
        let spec = SvModelSpec::heston(2.0, 0.04, 0.5, 0.04, 0.0);
        let set = simulate(&spec, 0.0, 1.0, 100, 20_000, 12).unwrap();
        assert!(set.mixing_m.iter().all(|m| *m == 1.0));
        let xs = [0.1f64, 0.25, 0.5];
        let strikes: Vec<f64> = xs
            .iter()
            .flat_map(|x| [100.0 * (-x).exp(), 100.0 * x.exp()])
            .collect();
        let mc = mc_smile(&set, &strikes).unwrap();
        for x in xs {
            let (lo, hi) = (mc.smile.vol(100.0 * (-x).exp()), mc.smile.vol(100.0 * x.exp()));
            assert!((lo - hi).abs() < 1e-8, "{x}: {lo} vs {hi}");
        }
    }

    #[test]
    fn mixing_matches_joint_simulation() {
        let spec = heston();
        let set = simulate(&spec, 0.0, 1.0, 200, 40_000, 21).unwrap();
        let samples: Vec<f64> = set
            .mixing_m
            .iter()
            .zip(&set.mixing_vol)
            .map(|(&m, &v)| analytics::call_total(100.0 * m, 100.0, v))
            .collect();
        let (mix, mix_se) = mean_and_se(&samples);
        let (joint, joint_se) = joint_simulation_call(&spec, 1.0, 100.0, 200, 40_000, 21).unwrap();
        let tol = 3.0 * (mix_se * mix_se + joint_se * joint_se).sqrt();
        assert!((mix - joint).abs() < tol, "{mix} vs {joint} tol {tol}");
    }
}
