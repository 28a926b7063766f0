//! Option-strip and variance-swap hedges of a seasoned volatility swap.
//!
//! Notionals are expressed per unit of `𝒱√T`: trading `N` zero-vanna
//! adjusted options, delta hedged with `Δᴴ`, offsets the change in `𝒱√T`.
//! Divide by `√T` for the change in the annualised swap price.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adjusted::{
    AdjustConfig, AdjustedError, AdjustedSmile, ConvolutionRule, RealizedState, Warning,
};
use crate::analytics;
use crate::normal;
use crate::quadrature;
use crate::smile::{MarketSmile, MonotoneCubic};
use crate::volswap::{self, VolSwapError, ZeroVannaQuote};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HedgeError {
    #[error("zero-vanna quote does not belong to this smile and realized state")]
    Consistency,
    #[error("Black-Scholes vega {0:e} is numerically degenerate")]
    DegenerateVega(f64),
    #[error("d- nodes cover [{lo:.3}, {hi:.3}], need at least [-{need}, {need}]")]
    Coverage { lo: f64, hi: f64, need: f64 },
    #[error("hedge ratio denominator {0} is not positive")]
    DegenerateConvexity(f64),
    #[error("hedge order must be 1 or 2, got {0}")]
    Order(u8),
    #[error(transparent)]
    VolSwap(#[from] VolSwapError),
    #[error(transparent)]
    Adjusted(#[from] AdjustedError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StripLeg {
    pub strike: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HedgeDiagnostics {
    pub vega: f64,
    /// `∂Iᴴ₋/∂S` from the moneyness identity.
    pub vol_spot_sensitivity: f64,
    /// `1 + Iᴴ₋√τ·∂(Iᴴ₋√τ)/∂ln K`.
    pub skew_factor: f64,
    pub strip_weight_sum: f64,
    /// `Σ weight·C(S, Kᵢ)`.
    pub strip_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HedgePlan {
    pub notional: f64,
    pub delta: f64,
    pub strip: Vec<StripLeg>,
    pub zv: ZeroVannaQuote,
    pub varswap: Vec<VarSwapHedge>,
    pub diagnostics: HedgeDiagnostics,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarSwapHedge {
    pub order: u8,
    /// Variance-swap notional per unit of `𝒱√T`, per unit of `V²T`.
    pub ratio: f64,
    /// `V²₀,T(t)·T`.
    pub varswap_strike_sq: f64,
    /// `V²T − (Iᴴ₋√τ)²`.
    pub convexity: f64,
    /// `Iᴴ₋√τ·∂²(Iᴴ√τ)/∂d₋²`.
    pub convexity_correction: f64,
    /// `(∂(Iᴴ√τ)/∂d₋)²`, left out of the second-order expansion.
    pub dropped_term: f64,
}

/// Market strikes and weights replicating the adjusted call at `K₋`.
pub fn option_strip_weights(
    smile: &MarketSmile,
    realized: &RealizedState,
    zv: &ZeroVannaQuote,
    cfg: &AdjustConfig,
) -> Result<Vec<StripLeg>, HedgeError> {
    realized.check_matches(smile)?;
    if zv.realized != *realized || zv.spot != smile.spot() {
        return Err(HedgeError::Consistency);
    }
    let rule = ConvolutionRule::new(smile, realized, zv.strike, cfg.scheme);
    Ok(rule
        .nodes
        .iter()
        .map(|n| StripLeg {
            strike: zv.strike * n.strike_factor,
            weight: n.weight,
        })
        .collect())
}

pub fn strip_value(smile: &MarketSmile, strip: &[StripLeg]) -> f64 {
    let s = smile.spot();
    quadrature::compensated_sum(
        strip
            .iter()
            .map(|l| l.weight * analytics::call_total(s, l.strike, smile.total_std(l.strike))),
    )
}

pub fn hedge_plan(
    smile: &MarketSmile,
    realized: &RealizedState,
    cfg: &AdjustConfig,
) -> Result<HedgePlan, HedgeError> {
    let priced = volswap::price_seasoned(smile, realized, cfg)?;
    plan_from(smile, realized, cfg, &priced.adjusted, priced.zero_vanna)
}

/// Plan from an already built adjusted smile and its zero-vanna quote.
pub fn plan_from(
    smile: &MarketSmile,
    realized: &RealizedState,
    cfg: &AdjustConfig,
    adj: &AdjustedSmile,
    zv: ZeroVannaQuote,
) -> Result<HedgePlan, HedgeError> {
    let s = smile.spot();
    let tau = realized.tau();
    let sqrt_tau = tau.sqrt();
    let omega = zv.total_std;
    // d₋ = 0 so d₊ = ω
    let vega = s * sqrt_tau * normal::pdf(omega);
    if !(vega >= 1e-12) {
        return Err(HedgeError::DegenerateVega(vega));
    }
    let vol_spot_sensitivity = -zv.slope / (s * sqrt_tau);
    let delta = normal::cdf(omega) + vega * vol_spot_sensitivity;
    let skew_factor = 1.0 + omega * zv.slope;
    let notional = (sqrt_tau / vega) / skew_factor;
    let strip = option_strip_weights(smile, realized, &zv, cfg)?;
    let strip_weight_sum = quadrature::compensated_sum(strip.iter().map(|l| l.weight));
    let varswap = vec![
        varswap_hedge_ratio(adj, &zv, 1)?,
        varswap_hedge_ratio(adj, &zv, 2)?,
    ];
    let mut warnings = zv.warnings.clone();
    if zv.dminus_convexity < 0.0 {
        warnings.push(Warning::NegativeConvexity {
            value: zv.dminus_convexity,
        });
    }
    Ok(HedgePlan {
        notional,
        delta,
        diagnostics: HedgeDiagnostics {
            vega,
            vol_spot_sensitivity,
            skew_factor,
            strip_weight_sum,
            strip_value: strip_value(smile, &strip),
        },
        strip,
        zv,
        varswap,
        warnings,
    })
}

const GATHERAL_RANGE: f64 = 6.0;
const GATHERAL_COVERAGE: f64 = 4.0;

/// `V²₀,T(t)·T = ∫N′(d₋)(Iᴴ√τ)²dd₋`, total variance including the accrued
/// part.
pub fn seasoned_varswap_strike(adj: &AdjustedSmile) -> Result<f64, HedgeError> {
    let (lo, hi) = adj.dminus_span();
    if lo > -GATHERAL_COVERAGE || hi < GATHERAL_COVERAGE {
        return Err(HedgeError::Coverage {
            lo,
            hi,
            need: GATHERAL_COVERAGE,
        });
    }
    let curve = MonotoneCubic::new(
        adj.dminus_nodes.iter().map(|n| n.d_minus).collect(),
        adj.dminus_nodes
            .iter()
            .map(|n| n.total_std * n.total_std)
            .collect(),
    );
    let breaks: Vec<f64> = (0..=48)
        .map(|i| -GATHERAL_RANGE + 0.25 * i as f64)
        .collect();
    let (x, w) = quadrature::composite_legendre(&breaks, 8);
    let body = quadrature::compensated_sum(
        x.iter()
            .zip(&w)
            .map(|(&d, &w)| w * normal::pdf(d) * curve.eval(d)),
    );
    // flat extension beyond the integration range
    let tail = normal::cdf(-GATHERAL_RANGE)
        * (curve.eval(-GATHERAL_RANGE) + curve.eval(GATHERAL_RANGE));
    Ok(body + tail)
}

pub fn varswap_hedge_ratio(
    adj: &AdjustedSmile,
    zv: &ZeroVannaQuote,
    order: u8,
) -> Result<VarSwapHedge, HedgeError> {
    let omega = zv.total_std;
    let denom = match order {
        1 => 2.0 * omega,
        2 => 2.0 * omega + zv.dminus_convexity,
        other => return Err(HedgeError::Order(other)),
    };
    if !(denom > 0.0) {
        return Err(HedgeError::DegenerateConvexity(denom));
    }
    let strike_sq = seasoned_varswap_strike(adj)?;
    Ok(VarSwapHedge {
        order,
        ratio: 1.0 / denom,
        varswap_strike_sq: strike_sq,
        convexity: strike_sq - omega * omega,
        convexity_correction: omega * zv.dminus_convexity,
        dropped_term: zv.dminus_slope * zv.dminus_slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adjusted::{adjusted_call_price, DminusNode};
    use crate::smile::Quote;

    fn flat(vol: f64, t: f64, expiry: f64) -> MarketSmile {
        let quotes = (0..81)
            .map(|i| Quote::new(100.0 * (-4.0 + 0.1 * i as f64).exp(), vol))
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
    fn fresh_flat_plan() {
        let s = flat(0.2, 0.0, 1.0);
        let r = RealizedState::fresh(1.0);
        let plan = hedge_plan(&s, &r, &AdjustConfig::default()).unwrap();
        assert!((plan.delta - normal::cdf(0.2)).abs() < 1e-12);
        assert!((plan.delta - 0.5793).abs() < 1e-4);
        assert!((plan.notional - 1.0 / plan.diagnostics.vega).abs() < 1e-15);
        assert_eq!(plan.strip.len(), 1);
        assert!((plan.strip[0].weight - 1.0).abs() < 1e-15);
        assert!((plan.strip[0].strike - plan.zv.strike).abs() < 1e-12);
        for h in &plan.varswap {
            assert!((h.ratio - 2.5).abs() < 1e-9);
            assert!(h.convexity_correction.abs() < 1e-9);
            assert!((h.varswap_strike_sq - 0.04).abs() < 1e-12);
        }
    }

    #[test]
    fn seasoned_flat_strip() {
        let s = flat(0.4, 0.5, 1.0);
        let r = RealizedState::new(0.5, 1.0, 0.3 * 0.3 * 0.5).unwrap();
        let cfg = AdjustConfig::default();
        let plan = hedge_plan(&s, &r, &cfg).unwrap();
        assert!((plan.diagnostics.strip_weight_sum - 1.0).abs() < 1e-12);
        assert!(plan.strip.iter().all(|l| l.weight >= 0.0));
        let direct = adjusted_call_price(&s, &r, plan.zv.strike, cfg.scheme).unwrap();
        assert!((plan.diagnostics.strip_value - direct).abs() < 1e-10);
        let implied =
            analytics::implied_vol(direct, 100.0, plan.zv.strike, 0.5, true).unwrap();
        assert!((implied - 0.5).abs() < 1e-9);
    }

    #[test]
    fn notional_inverts_skew_factor() {
        let s = skewed();
        let r = RealizedState::new(0.4, 1.0, 0.05 * 0.4).unwrap();
        let plan = hedge_plan(&s, &r, &AdjustConfig::default()).unwrap();
        let tau: f64 = 0.6;
        let back = plan.notional * (plan.diagnostics.vega / tau.sqrt())
            * (1.0 + plan.zv.total_std * plan.zv.slope);
        assert!((back - 1.0).abs() < 1e-12);
        assert!(plan.zv.slope < 0.0 && plan.delta > normal::cdf(plan.zv.total_std));
        let (v1, v2) = (plan.varswap[0], plan.varswap[1]);
        if plan.zv.dminus_convexity >= 0.0 {
            assert!(v2.ratio <= v1.ratio);
            assert!(v1.varswap_strike_sq >= plan.zv.total_std.powi(2));
        }
    }

    #[test]
    fn mismatched_quote_rejected() {
        let s = flat(0.2, 0.5, 1.0);
        let r = RealizedState::new(0.5, 1.0, 0.02).unwrap();
        let cfg = AdjustConfig::default();
        let mut zv = volswap::price_seasoned(&s, &r, &cfg).unwrap().zero_vanna;
        zv.realized = RealizedState::new(0.5, 1.0, 0.03).unwrap();
        assert_eq!(
            option_strip_weights(&s, &r, &zv, &cfg),
            Err(HedgeError::Consistency)
        );
    }

    fn synthetic(total_std: impl Fn(f64) -> f64) -> AdjustedSmile {
        let base = flat(0.2, 0.0, 1.0);
        let r = RealizedState::fresh(1.0);
        let mut adj = AdjustedSmile::build(&base, &r, &AdjustConfig::default()).unwrap();
        adj.dminus_nodes = (0..81)
            .map(|i| {
                let d = -6.0 + 0.15 * i as f64;
                DminusNode {
                    d_minus: d,
                    total_std: total_std(d),
                }
            })
            .collect();
        adj
    }

    #[test]
    fn gatheral_linear_total_std() {
        let (a, b) = (0.3, 0.02);
        let adj = synthetic(|d| a + b * d);
        let v = seasoned_varswap_strike(&adj).unwrap();
        // flat beyond ±6 costs b²·E[d²; |d| > 6] ~ 1e-12
        assert!((v - (a * a + b * b)).abs() < 1e-8, "{v}");
    }

    #[test]
    fn coverage_error() {
        let mut adj = synthetic(|_| 0.2);
        adj.dminus_nodes.retain(|n| n.d_minus > -3.0);
        assert!(matches!(
            seasoned_varswap_strike(&adj),
            Err(HedgeError::Coverage { .. })
        ));
    }

    #[test]
    fn order_two_ratio_arithmetic() {
        let adj = synthetic(|_| 0.2);
        let mut zv = volswap::zero_vanna_point(&adj).unwrap();
        zv.total_std = 0.2;
        zv.dminus_convexity = 0.02;
        let h = varswap_hedge_ratio(&adj, &zv, 2).unwrap();
        assert!((h.ratio - 1.0 / 0.42).abs() < 1e-12);
        assert!((h.convexity_correction - 0.004).abs() < 1e-15);
        zv.dminus_convexity = -0.5;
        assert!(matches!(
            varswap_hedge_ratio(&adj, &zv, 2),
            Err(HedgeError::DegenerateConvexity(_))
        ));
        assert_eq!(varswap_hedge_ratio(&adj, &zv, 3), Err(HedgeError::Order(3)));
    }
}
