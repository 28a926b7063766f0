//! Historically adjusted smile.
//!
//! Options on `Sᴴ = S·H`, where `H` is an independent lognormal factor whose
//! total variance equals the accrued realized variance, are priced by
//! convolving market option prices against the law of `H`:
//!
//! ```text
//! Cᴴ(K) = E[h · C(S, K/h)],   ln h ~ N(−½ν², ν²),   ν² = ∫₀ᵗσ²du = c²τ
//! ```
//!
//! With this mean `E[H_T] = 1`, so `Sᴴ = S` at valuation. Absorbing the `h`
//! factor into the density shifts the Gaussian, giving
//! `Cᴴ(K) = ∫ C(S, K·e^{−½ν²−νz}) φ(z) dz`, which is what the rules below
//! discretise. Every rule is a list of market strikes `K/hᵢ` with positive
//! weights `hᵢwᵢ`; the same list is the replicating option strip.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{self, AnalyticsError};
use crate::normal;
use crate::quadrature;
use crate::smile::{MarketSmile, Quote, SmileError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdjustedError {
    #[error("invalid realized state: {0}")]
    Realized(&'static str),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("realized state (t={realized_t}, T={realized_expiry}) does not match smile (t={smile_t}, T={smile_expiry})")]
    Mismatch {
        realized_t: f64,
        realized_expiry: f64,
        smile_t: f64,
        smile_expiry: f64,
    },
    #[error("implied vol inversion failed at strike {strike}: {source}")]
    Inversion {
        strike: f64,
        #[source]
        source: AnalyticsError,
    },
    #[error("adjusted smile is not monotone in d- near strike {strike}")]
    NonMonotoneDminus { strike: f64 },
    #[error(transparent)]
    Smile(#[from] SmileError),
}

/// Accrued realized variance of a seasoned swap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealizedState {
    pub t: f64,
    #[serde(rename = "T")]
    pub expiry: f64,
    /// `∫₀ᵗσ²du`.
    pub accrued_var: f64,
}

impl RealizedState {
    pub fn new(t: f64, expiry: f64, accrued_var: f64) -> Result<Self, AdjustedError> {
        if !(t.is_finite() && expiry.is_finite() && accrued_var.is_finite()) {
            return Err(AdjustedError::Realized("non-finite input"));
        }
        if !(t >= 0.0 && t < expiry) {
            return Err(AdjustedError::Realized("need 0 <= t < T"));
        }
        if accrued_var < 0.0 {
            return Err(AdjustedError::Realized("accrued variance must be non-negative"));
        }
        if t == 0.0 && accrued_var != 0.0 {
            return Err(AdjustedError::Realized("a fresh swap has no accrued variance"));
        }
        Ok(Self {
            t,
            expiry,
            accrued_var,
        })
    }

    pub fn fresh(expiry: f64) -> Self {
        Self {
            t: 0.0,
            expiry,
            accrued_var: 0.0,
        }
    }

    pub fn tau(&self) -> f64 {
        self.expiry - self.t
    }

    /// `c² = ∫₀ᵗσ²du / (T − t)`.
    pub fn c_squared(&self) -> f64 {
        self.accrued_var / self.tau()
    }

    /// Total standard deviation of `ln H_T`, `ν = c√τ`.
    pub fn nu(&self) -> f64 {
        self.accrued_var.sqrt()
    }

    /// Mean of `ln H_T`, `μ = −½c²τ`.
    pub fn mu(&self) -> f64 {
        -0.5 * self.accrued_var
    }

    pub fn check_matches(&self, smile: &MarketSmile) -> Result<(), AdjustedError> {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
        if close(self.t, smile.t()) && close(self.expiry, smile.expiry()) {
            Ok(())
        } else {
            Err(AdjustedError::Mismatch {
                realized_t: self.t,
                realized_expiry: self.expiry,
                smile_t: smile.t(),
                smile_expiry: smile.expiry(),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConvolutionScheme {
    /// Gauss–Hermite in the standardised log of `h`.
    GaussHermite { nodes: usize },
    /// Composite Gauss–Legendre on the Gaussian variable with panels refined
    /// around the payoff kink `K/h = S`.
    Panels { points_per_panel: usize },
}

impl Default for ConvolutionScheme {
    fn default() -> Self {
        ConvolutionScheme::Panels {
            points_per_panel: 8,
        }
    }
}

impl ConvolutionScheme {
    pub fn validate(&self) -> Result<(), AdjustedError> {
        let n = match *self {
            ConvolutionScheme::GaussHermite { nodes } => nodes,
            ConvolutionScheme::Panels { points_per_panel } => points_per_panel,
        };
        if n < 8 {
            return Err(AdjustedError::Config(format!(
                "quadrature node count {n} is below the minimum of 8"
            )));
        }
        if n > 512 {
            return Err(AdjustedError::Config(format!(
                "quadrature node count {n} exceeds 512"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdjustConfig {
    pub scheme: ConvolutionScheme,
    /// Number of log-spaced strikes in the adjusted smile grid.
    pub grid_points: usize,
    /// Half width of the grid in adjusted total standard deviations.
    pub grid_halfwidth: f64,
    /// The automatic grid is widened until d₋ covers `[−span, span]`.
    pub min_dminus_span: f64,
    /// Wing-weight fraction above which a strike is flagged.
    pub wing_tolerance: f64,
}

impl Default for AdjustConfig {
    fn default() -> Self {
        Self {
            scheme: ConvolutionScheme::default(),
            grid_points: 41,
            grid_halfwidth: 6.0,
            min_dminus_span: 4.5,
            wing_tolerance: 1e-3,
        }
    }
}

impl AdjustConfig {
    pub fn validate(&self) -> Result<(), AdjustedError> {
        self.scheme.validate()?;
        if self.grid_points < crate::smile::MIN_QUOTES {
            return Err(AdjustedError::Config(format!(
                "grid needs at least {} strikes",
                crate::smile::MIN_QUOTES
            )));
        }
        if !(self.grid_halfwidth.is_finite() && self.grid_halfwidth >= 3.0) {
            return Err(AdjustedError::Config(
                "grid half width must be at least 3 standard deviations".into(),
            ));
        }
        if !(self.min_dminus_span.is_finite() && self.min_dminus_span > 0.0) {
            return Err(AdjustedError::Config("d- span must be positive".into()));
        }
        Ok(())
    }
}

/// One node of a discretised convolution: market strike `K·factor` with
/// weight `h·w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleNode {
    pub strike_factor: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionRule {
    pub nodes: Vec<RuleNode>,
}

const PANEL_RANGE: f64 = 8.5;
const PANEL_WIDTH: f64 = 0.5;

impl ConvolutionRule {
    /// Rule for pricing the adjusted option struck at `strike`.
    pub fn new(
        smile: &MarketSmile,
        realized: &RealizedState,
        strike: f64,
        scheme: ConvolutionScheme,
    ) -> Self {
        let nu = realized.nu();
        if nu == 0.0 {
            return Self {
                nodes: vec![RuleNode {
                    strike_factor: 1.0,
                    weight: 1.0,
                }],
            };
        }
        match scheme {
            ConvolutionScheme::GaussHermite { nodes } => Self::gauss_hermite(nu, nodes),
            ConvolutionScheme::Panels { points_per_panel } => {
                let kink_width = smile.total_std(smile.spot()) / nu;
                let kink = ((strike / smile.spot()).ln() - 0.5 * nu * nu) / nu;
                Self::panels(nu, kink, kink_width, points_per_panel)
            }
        }
    }

    fn gauss_hermite(nu: f64, n: usize) -> Self {
        let (x, w) = quadrature::gauss_hermite(n);
        let norm = std::f64::consts::PI.sqrt().recip();
        let nodes = x
            .iter()
            .zip(&w)
            .map(|(&xi, &wi)| {
                let h = (-0.5 * nu * nu + nu * std::f64::consts::SQRT_2 * xi).exp();
                RuleNode {
                    strike_factor: 1.0 / h,
                    weight: h * wi * norm,
                }
            })
            .collect();
        Self { nodes }
    }

    fn panels(nu: f64, kink: f64, kink_width: f64, points: usize) -> Self {
        let n_uniform = (2.0 * PANEL_RANGE / PANEL_WIDTH).round() as usize;
        let mut breaks: Vec<f64> = (0..=n_uniform)
            .map(|i| -PANEL_RANGE + PANEL_WIDTH * i as f64)
            .collect();
        if kink.abs() < PANEL_RANGE && kink_width < PANEL_WIDTH {
            breaks.push(kink);
            let mut offset = 0.5 * kink_width;
            while offset < PANEL_WIDTH {
                breaks.push(kink - offset);
                breaks.push(kink + offset);
                offset *= 2.0;
            }
        }
        breaks.retain(|b| b.abs() <= PANEL_RANGE);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let (z, w) = quadrature::composite_legendre(&breaks, points);
        let nodes = z
            .iter()
            .zip(&w)
            .map(|(&zi, &wi)| RuleNode {
                strike_factor: (-0.5 * nu * nu - nu * zi).exp(),
                weight: wi * normal::pdf(zi),
            })
            .collect();
        Self { nodes }
    }

    pub fn weight_sum(&self) -> f64 {
        quadrature::compensated_sum(self.nodes.iter().map(|n| n.weight))
    }

    /// Weight carried by nodes whose market strike lies outside the quotes.
    pub fn wing_weight(&self, smile: &MarketSmile, strike: f64) -> f64 {
        self.nodes
            .iter()
            .filter(|n| !smile.in_range(strike * n.strike_factor))
            .map(|n| n.weight)
            .sum()
    }
}

pub(crate) fn convolve(
    smile: &MarketSmile,
    rule: &ConvolutionRule,
    strike: f64,
    is_call: bool,
) -> f64 {
    let s = smile.spot();
    quadrature::compensated_sum(rule.nodes.iter().map(|n| {
        let k = strike * n.strike_factor;
        let omega = smile.total_std(k);
        let p = if is_call {
            analytics::call_total(s, k, omega)
        } else {
            analytics::put_total(s, k, omega)
        };
        n.weight * p
    }))
}

fn validate_strike(strike: f64) -> Result<(), AdjustedError> {
    if strike.is_finite() && strike > 0.0 {
        Ok(())
    } else {
        Err(AdjustedError::Config(format!("invalid strike {strike}")))
    }
}

/// Price of a call on the adjusted process, `Cᴴ(S, K)`.
pub fn adjusted_call_price(
    smile: &MarketSmile,
    realized: &RealizedState,
    strike: f64,
    scheme: ConvolutionScheme,
) -> Result<f64, AdjustedError> {
    adjusted_price(smile, realized, strike, true, scheme)
}

pub fn adjusted_put_price(
    smile: &MarketSmile,
    realized: &RealizedState,
    strike: f64,
    scheme: ConvolutionScheme,
) -> Result<f64, AdjustedError> {
    adjusted_price(smile, realized, strike, false, scheme)
}

pub fn adjusted_price(
    smile: &MarketSmile,
    realized: &RealizedState,
    strike: f64,
    is_call: bool,
    scheme: ConvolutionScheme,
) -> Result<f64, AdjustedError> {
    scheme.validate()?;
    realized.check_matches(smile)?;
    validate_strike(strike)?;
    let rule = ConvolutionRule::new(smile, realized, strike, scheme);
    Ok(convolve(smile, &rule, strike, is_call))
}

/// `−∂Cᴴ/∂K`, the adjusted digital, including the smile's strike dependence.
pub fn adjusted_digital(
    smile: &MarketSmile,
    realized: &RealizedState,
    strike: f64,
    scheme: ConvolutionScheme,
) -> Result<f64, AdjustedError> {
    scheme.validate()?;
    realized.check_matches(smile)?;
    validate_strike(strike)?;
    let rule = ConvolutionRule::new(smile, realized, strike, scheme);
    let s = smile.spot();
    Ok(quadrature::compensated_sum(rule.nodes.iter().map(|n| {
        let k = strike * n.strike_factor;
        n.weight * n.strike_factor * market_digital(smile, s, k)
    })))
}

fn market_digital(smile: &MarketSmile, spot: f64, strike: f64) -> f64 {
    let w = smile.total_variance(strike);
    let omega = w.max(0.0).sqrt();
    if omega == 0.0 {
        return if spot > strike { 1.0 } else { 0.0 };
    }
    let (d_minus, d_plus) = analytics::d_pair(spot, strike, omega);
    let dw_dx = total_variance_slope(smile, strike.ln());
    let domega_dk = dw_dx / (2.0 * omega) / strike;
    normal::cdf(d_minus) - spot * normal::pdf(d_plus) * domega_dk
}

fn total_variance_slope(smile: &MarketSmile, x: f64) -> f64 {
    const H: f64 = 1e-5;
    let lo = smile.min_strike().ln();
    let hi = smile.max_strike().ln();
    if x <= lo || x >= hi {
        return 0.0;
    }
    let up = smile.total_variance_at_log((x + H).min(hi));
    let dn = smile.total_variance_at_log((x - H).max(lo));
    (up - dn) / ((x + H).min(hi) - (x - H).max(lo))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjustedNode {
    pub strike: f64,
    pub vol: f64,
    pub price: f64,
    pub wing_weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DminusNode {
    pub d_minus: f64,
    pub total_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    /// Quadrature nodes read the extrapolated market wings.
    WingExtrapolation { strike: f64, weight: f64 },
    /// Slope query outside the quoted range of the adjusted smile.
    SlopeInWing { strike: f64 },
    /// Measured convexity is negative.
    NegativeConvexity { value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjustedSmile {
    pub base: MarketSmile,
    pub realized: RealizedState,
    pub nodes: Vec<AdjustedNode>,
    /// Sorted by increasing d₋.
    pub dminus_nodes: Vec<DminusNode>,
    pub interpolant: MarketSmile,
    pub scheme: ConvolutionScheme,
    pub warnings: Vec<Warning>,
}

impl AdjustedSmile {
    pub fn spot(&self) -> f64 {
        self.base.spot()
    }

    pub fn tau(&self) -> f64 {
        self.realized.tau()
    }

    /// Interpolated adjusted implied vol.
    pub fn vol(&self, strike: f64) -> f64 {
        self.interpolant.vol(strike)
    }

    pub fn dminus_span(&self) -> (f64, f64) {
        (
            self.dminus_nodes[0].d_minus,
            self.dminus_nodes[self.dminus_nodes.len() - 1].d_minus,
        )
    }

    /// Build with the default grid, widening it on whichever side falls short
    /// of the configured d₋ coverage.
    pub fn build(
        smile: &MarketSmile,
        realized: &RealizedState,
        cfg: &AdjustConfig,
    ) -> Result<Self, AdjustedError> {
        cfg.validate()?;
        let mut lo_width = cfg.grid_halfwidth;
        let mut hi_width = cfg.grid_halfwidth;
        let mut adj = None;
        for _ in 0..6 {
            let grid = strike_grid(smile, realized, cfg.grid_points, lo_width, hi_width);
            let built = build_adjusted_smile(smile, realized, &grid, cfg)?;
            let (dmin, dmax) = built.dminus_span();
            let short_hi_strikes = dmin > -cfg.min_dminus_span;
            let short_lo_strikes = dmax < cfg.min_dminus_span;
            adj = Some(built);
            if !short_hi_strikes && !short_lo_strikes {
                break;
            }
            if short_hi_strikes {
                hi_width *= 1.4;
            }
            if short_lo_strikes {
                lo_width *= 1.4;
            }
        }
        Ok(adj.expect("at least one build"))
    }
}

/// Log-spaced strikes around the anticipated adjusted zero-vanna strike.
pub fn strike_grid(
    smile: &MarketSmile,
    realized: &RealizedState,
    points: usize,
    lo_width: f64,
    hi_width: f64,
) -> Vec<f64> {
    let tau = realized.tau();
    let atm = smile.vol(smile.spot());
    let total = (realized.accrued_var + atm * atm * tau).sqrt();
    let centre = smile.spot().ln() - 0.5 * total * total;
    let lo = centre - lo_width * total;
    let hi = centre + hi_width * total;
    (0..points)
        .map(|i| (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

pub fn default_strike_grid(
    smile: &MarketSmile,
    realized: &RealizedState,
    cfg: &AdjustConfig,
) -> Vec<f64> {
    strike_grid(
        smile,
        realized,
        cfg.grid_points,
        cfg.grid_halfwidth,
        cfg.grid_halfwidth,
    )
}

pub fn build_adjusted_smile(
    smile: &MarketSmile,
    realized: &RealizedState,
    strike_grid: &[f64],
    cfg: &AdjustConfig,
) -> Result<AdjustedSmile, AdjustedError> {
    cfg.validate()?;
    realized.check_matches(smile)?;
    if strike_grid.len() < crate::smile::MIN_QUOTES {
        return Err(AdjustedError::Config(format!(
            "strike grid needs at least {} strikes",
            crate::smile::MIN_QUOTES
        )));
    }
    for &k in strike_grid {
        validate_strike(k)?;
    }
    if !strike_grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(AdjustedError::Config(
            "strike grid must be strictly increasing".into(),
        ));
    }
    let s = smile.spot();
    let tau = realized.tau();
    let nodes: Vec<Result<AdjustedNode, AdjustedError>> = strike_grid
        .par_iter()
        .map(|&k| {
            let rule = ConvolutionRule::new(smile, realized, k, cfg.scheme);
            let is_call = k >= s;
            let price = convolve(smile, &rule, k, is_call);
            let vol = analytics::implied_vol(price, s, k, tau, is_call)
                .map_err(|source| AdjustedError::Inversion { strike: k, source })?;
            if vol <= 0.0 {
                return Err(AdjustedError::Inversion {
                    strike: k,
                    source: AnalyticsError::NoConvergence,
                });
            }
            Ok(AdjustedNode {
                strike: k,
                vol,
                price,
                wing_weight: rule.wing_weight(smile, k),
            })
        })
        .collect();
    let nodes = nodes.into_iter().collect::<Result<Vec<_>, _>>()?;

    let sqrt_tau = tau.sqrt();
    let mut dminus_nodes: Vec<DminusNode> = Vec::with_capacity(nodes.len());
    for n in nodes.iter().rev() {
        let omega = n.vol * sqrt_tau;
        let d = (s / n.strike).ln() / omega - 0.5 * omega;
        if let Some(prev) = dminus_nodes.last() {
            if d <= prev.d_minus {
                return Err(AdjustedError::NonMonotoneDminus { strike: n.strike });
            }
        }
        dminus_nodes.push(DminusNode {
            d_minus: d,
            total_std: omega,
        });
    }

    let warnings = nodes
        .iter()
        .filter(|n| n.wing_weight > cfg.wing_tolerance)
        .map(|n| Warning::WingExtrapolation {
            strike: n.strike,
            weight: n.wing_weight,
        })
        .collect();
    let quotes = nodes.iter().map(|n| Quote::new(n.strike, n.vol)).collect();
    let interpolant = MarketSmile::new_unchecked_coverage(s, smile.t(), smile.expiry(), quotes)?;
    Ok(AdjustedSmile {
        base: smile.clone(),
        realized: *realized,
        nodes,
        dminus_nodes,
        interpolant,
        scheme: cfg.scheme,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(vol: f64, t: f64, expiry: f64) -> MarketSmile {
        let quotes = (0..61)
            .map(|i| Quote::new(100.0 * (-3.0 + 0.1 * i as f64).exp(), vol))
            .collect();
        MarketSmile::new(100.0, t, expiry, quotes).unwrap()
    }

    fn skewed() -> MarketSmile {
        let quotes = (0..41)
            .map(|i| {
                let x = -1.0 + 0.05 * i as f64;
                Quote::new(100.0 * x.exp(), 0.22 - 0.08 * x + 0.1 * x * x)
            })
            .collect();
        MarketSmile::new(100.0, 0.4, 1.0, quotes).unwrap()
    }

    #[test]
    fn realized_state_validation() {
        assert!(RealizedState::new(0.0, 1.0, 0.0).is_ok());
        assert!(RealizedState::new(0.0, 1.0, 0.01).is_err());
        assert!(RealizedState::new(1.0, 1.0, 0.01).is_err());
        assert!(RealizedState::new(0.5, 1.0, -0.01).is_err());
        assert!(RealizedState::new(0.5, 1.0, f64::NAN).is_err());
        let r = RealizedState::new(0.25, 1.0, 0.03).unwrap();
        assert!((r.c_squared() - 0.04).abs() < 1e-15);
    }

    #[test]
    fn fresh_swap_is_identity() {
        let s = skewed();
        let r = RealizedState::new(0.4, 1.0, 0.0).unwrap();
        for &k in &[70.0, 95.0, 100.0, 130.0] {
            let p = adjusted_call_price(&s, &r, k, ConvolutionScheme::default()).unwrap();
            assert_eq!(p, s.call_price(k));
        }
    }

    #[test]
    fn flat_smile_stacks_variance() {
        // I = 0.4, c = 0.3, tau = 1 => adjusted vol 0.5 at every strike
        let s = flat(0.4, 0.5, 1.5);
        let r = RealizedState::new(0.5, 1.5, 0.09).unwrap();
        let k_minus = 100.0 * (-0.5 * 0.25f64).exp();
        for &k in &[k_minus, 60.0, 100.0, 170.0] {
            let p = adjusted_call_price(&s, &r, k, ConvolutionScheme::default()).unwrap();
            let v = analytics::implied_vol(p, 100.0, k, 1.0, true).unwrap();
            assert!((v - 0.5).abs() < 1e-10, "{k}: {v}");
        }
    }

    #[test]
    fn gauss_hermite_self_convergence() {
        let s = flat(0.2, 0.0, 1.0);
        let s = s.with_spot(100.0).unwrap();
        let s = MarketSmile::new_unchecked_coverage(100.0, 0.5, 1.0, s.quotes().to_vec()).unwrap();
        let r = RealizedState::new(0.5, 1.0, 0.005).unwrap();
        for &k in &[90.0, 100.0, 110.0] {
            let a = adjusted_call_price(&s, &r, k, ConvolutionScheme::GaussHermite { nodes: 64 })
                .unwrap();
            let b = adjusted_call_price(&s, &r, k, ConvolutionScheme::GaussHermite { nodes: 128 })
                .unwrap();
            assert!((a - b).abs() < 1e-10, "{k}: {a} {b}");
        }
    }

    #[test]
    fn node_count_validated() {
        let s = flat(0.2, 0.5, 1.0);
        let r = RealizedState::new(0.5, 1.0, 0.01).unwrap();
        let err = adjusted_call_price(&s, &r, 100.0, ConvolutionScheme::GaussHermite { nodes: 7 });
        assert!(matches!(err, Err(AdjustedError::Config(_))));
    }

    #[test]
    fn mismatched_realized_state() {
        let s = flat(0.2, 0.5, 1.0);
        let r = RealizedState::new(0.4, 1.0, 0.01).unwrap();
        assert!(matches!(
            adjusted_call_price(&s, &r, 100.0, ConvolutionScheme::default()),
            Err(AdjustedError::Mismatch { .. })
        ));
    }

    #[test]
    fn weights_are_a_martingale_measure() {
        let s = skewed();
        let r = RealizedState::new(0.4, 1.0, 0.03).unwrap();
        for scheme in [
            ConvolutionScheme::default(),
            ConvolutionScheme::GaussHermite { nodes: 64 },
        ] {
            let rule = ConvolutionRule::new(&s, &r, 95.0, scheme);
            assert!((rule.weight_sum() - 1.0).abs() < 1e-12);
            assert!(rule.nodes.iter().all(|n| n.weight > 0.0));
        }
    }

    #[test]
    fn put_call_parity_on_adjusted_process() {
        let s = skewed();
        let r = RealizedState::new(0.4, 1.0, 0.03).unwrap();
        for &k in &[80.0, 100.0, 125.0] {
            let c = adjusted_call_price(&s, &r, k, ConvolutionScheme::default()).unwrap();
            let p = adjusted_put_price(&s, &r, k, ConvolutionScheme::default()).unwrap();
            assert!((c - p - (100.0 - k)).abs() < 1e-10);
        }
    }

    #[test]
    fn flat_smile_builds_flat_adjusted_smile() {
        let s = flat(0.25, 0.3, 1.0);
        let r = RealizedState::new(0.3, 1.0, 0.3 * 0.09).unwrap();
        let adj = AdjustedSmile::build(&s, &r, &AdjustConfig::default()).unwrap();
        let expect = (r.c_squared() + 0.0625).sqrt();
        for n in &adj.nodes {
            assert!((n.vol - expect).abs() < 1e-9, "{} {}", n.strike, n.vol);
        }
        let (lo, hi) = adj.dminus_span();
        assert!(lo < -4.5 && hi > 4.5);
    }

    #[test]
    fn adjusted_vols_dominate_near_the_money() {
        let s = skewed();
        let r = RealizedState::new(0.4, 1.0, 0.024).unwrap();
        let adj = AdjustedSmile::build(&s, &r, &AdjustConfig::default()).unwrap();
        for n in adj.nodes.iter().filter(|n| (n.strike / 100.0).ln().abs() < 0.3) {
            assert!(n.vol >= s.vol(n.strike), "{}", n.strike);
        }
    }

    #[test]
    fn adjusted_prices_decreasing_and_convex() {
        let s = skewed();
        let r = RealizedState::new(0.4, 1.0, 0.024).unwrap();
        let grid: Vec<f64> = (0..41).map(|i| 60.0 + 2.0 * i as f64).collect();
        let calls: Vec<f64> = grid
            .iter()
            .map(|&k| adjusted_call_price(&s, &r, k, ConvolutionScheme::default()).unwrap())
            .collect();
        for w in calls.windows(3) {
            assert!(w[1] < w[0]);
            assert!(w[0] - 2.0 * w[1] + w[2] > 0.0);
        }
    }

    #[test]
    fn digital_is_one_half_at_zero_vanna_strike_of_flat_smile() {
        let s = flat(0.3, 0.25, 1.0);
        let r = RealizedState::new(0.25, 1.0, 0.25 * 0.04).unwrap();
        let total = r.accrued_var + 0.09 * 0.75;
        let k_minus = 100.0 * (-0.5 * total).exp();
        let d = adjusted_digital(&s, &r, k_minus, ConvolutionScheme::default()).unwrap();
        assert!((d - 0.5).abs() < 1e-8, "{d}");
    }
}
