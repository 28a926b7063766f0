//! Black-Scholes pricing, greeks and implied-volatility inversion.
//!
//! Rates and dividends are zero throughout, so forwards equal spot and
//! prices are undiscounted.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normal;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("non-finite or out-of-domain input: {0}")]
    Domain(&'static str),
    #[error("greeks undefined for zero volatility or zero time to expiry")]
    Degenerate,
    #[error("price {price} violates the {bound} no-arbitrage bound {limit}")]
    Arbitrage {
        price: f64,
        bound: Bound,
        limit: f64,
    },
    #[error("implied volatility solver did not converge")]
    NoConvergence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bound {
    Lower,
    Upper,
}

impl std::fmt::Display for Bound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Bound::Lower => f.write_str("lower"),
            Bound::Upper => f.write_str("upper"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsInputs {
    pub spot: f64,
    pub strike: f64,
    pub vol: f64,
    pub tau: f64,
    pub is_call: bool,
}

impl BsInputs {
    pub fn call(spot: f64, strike: f64, vol: f64, tau: f64) -> Self {
        Self {
            spot,
            strike,
            vol,
            tau,
            is_call: true,
        }
    }

    pub fn put(spot: f64, strike: f64, vol: f64, tau: f64) -> Self {
        Self {
            is_call: false,
            ..Self::call(spot, strike, vol, tau)
        }
    }

    pub fn validate(&self) -> Result<(), AnalyticsError> {
        if !(self.spot.is_finite() && self.spot > 0.0) {
            return Err(AnalyticsError::Domain("spot must be positive and finite"));
        }
        if !(self.strike.is_finite() && self.strike > 0.0) {
            return Err(AnalyticsError::Domain("strike must be positive and finite"));
        }
        if !(self.vol.is_finite() && self.vol >= 0.0) {
            return Err(AnalyticsError::Domain("vol must be non-negative and finite"));
        }
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(AnalyticsError::Domain("tau must be non-negative and finite"));
        }
        Ok(())
    }

    pub fn total_std(&self) -> f64 {
        self.vol * self.tau.sqrt()
    }

    pub fn intrinsic(&self) -> f64 {
        intrinsic(self.spot, self.strike, self.is_call)
    }
}

#[inline]
pub fn intrinsic(spot: f64, strike: f64, is_call: bool) -> f64 {
    if is_call {
        (spot - strike).max(0.0)
    } else {
        (strike - spot).max(0.0)
    }
}

/// Call price as a function of total standard deviation `ω = I√τ`.
///
/// No validation; callers on hot paths guarantee positive spot and strike.
#[inline]
pub fn call_total(spot: f64, strike: f64, total_std: f64) -> f64 {
    if total_std <= 0.0 {
        return (spot - strike).max(0.0);
    }
    let d_minus = (spot / strike).ln() / total_std - 0.5 * total_std;
    spot * normal::cdf(d_minus + total_std) - strike * normal::cdf(d_minus)
}

/// Put price as a function of total standard deviation, evaluated directly
/// rather than through parity so that far out-of-the-money puts keep their
/// relative precision.
#[inline]
pub fn put_total(spot: f64, strike: f64, total_std: f64) -> f64 {
    if total_std <= 0.0 {
        return (strike - spot).max(0.0);
    }
    let d_minus = (spot / strike).ln() / total_std - 0.5 * total_std;
    strike * normal::cdf(-d_minus) - spot * normal::cdf(-d_minus - total_std)
}

/// Out-of-the-money option price: put below spot, call at or above.
#[inline]
pub fn otm_total(spot: f64, strike: f64, total_std: f64) -> f64 {
    if strike < spot {
        put_total(spot, strike, total_std)
    } else {
        call_total(spot, strike, total_std)
    }
}

/// `(d₋, d₊)` for total standard deviation `ω > 0`.
#[inline]
pub fn d_pair(spot: f64, strike: f64, total_std: f64) -> (f64, f64) {
    let d_minus = (spot / strike).ln() / total_std - 0.5 * total_std;
    (d_minus, d_minus + total_std)
}

pub fn bs_price(inputs: &BsInputs) -> Result<f64, AnalyticsError> {
    inputs.validate()?;
    let omega = inputs.total_std();
    Ok(if inputs.is_call {
        call_total(inputs.spot, inputs.strike, omega)
    } else {
        put_total(inputs.spot, inputs.strike, omega)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Greeks {
    pub delta: f64,
    pub vega: f64,
    pub vanna: f64,
    pub volga: f64,
    pub d_plus: f64,
    pub d_minus: f64,
}

pub fn bs_greeks(inputs: &BsInputs) -> Result<Greeks, AnalyticsError> {
    inputs.validate()?;
    if inputs.vol == 0.0 || inputs.tau == 0.0 {
        return Err(AnalyticsError::Degenerate);
    }
    let sqrt_tau = inputs.tau.sqrt();
    let (d_minus, d_plus) = d_pair(inputs.spot, inputs.strike, inputs.vol * sqrt_tau);
    let density = normal::pdf(d_plus);
    let vega = inputs.spot * sqrt_tau * density;
    let call_delta = normal::cdf(d_plus);
    Ok(Greeks {
        delta: if inputs.is_call {
            call_delta
        } else {
            call_delta - 1.0
        },
        vega,
        vanna: -density * d_minus / inputs.vol,
        volga: vega * d_plus * d_minus / inputs.vol,
        d_plus,
        d_minus,
    })
}

const MAX_TOTAL_STD: f64 = 40.0;

/// Invert a Black-Scholes price for its implied volatility.
///
/// Works on the out-of-the-money equivalent price and solves
/// `ln C(ω) = ln p` for the total standard deviation ω with a Newton step
/// safeguarded by a bisection bracket. The bracket starts at `[0, ω_hi]`
/// where `ω_hi = max(1, 2·√(2|ln S/K|))` is doubled until it dominates.
pub fn implied_vol(
    price: f64,
    spot: f64,
    strike: f64,
    tau: f64,
    is_call: bool,
) -> Result<f64, AnalyticsError> {
    BsInputs {
        spot,
        strike,
        vol: 0.0,
        tau,
        is_call,
    }
    .validate()?;
    if !price.is_finite() {
        return Err(AnalyticsError::Domain("price must be finite"));
    }
    if tau == 0.0 {
        return Err(AnalyticsError::Domain("tau must be positive for inversion"));
    }
    let lower = intrinsic(spot, strike, is_call);
    let upper = if is_call { spot } else { strike };
    if price < lower {
        return Err(AnalyticsError::Arbitrage {
            price,
            bound: Bound::Lower,
            limit: lower,
        });
    }
    if price >= upper {
        return Err(AnalyticsError::Arbitrage {
            price,
            bound: Bound::Upper,
            limit: upper,
        });
    }
    // Convert to the out-of-the-money side by parity.
    let otm = match (is_call, strike < spot) {
        (true, true) => price - (spot - strike),
        (false, false) => price - (strike - spot),
        _ => price,
    };
    if otm <= 0.0 {
        return Ok(0.0);
    }
    let omega = solve_total_std(otm, spot, strike)?;
    Ok(omega / tau.sqrt())
}

/// Solve `otm_total(spot, strike, ω) = target` for ω.
pub(crate) fn solve_total_std(target: f64, spot: f64, strike: f64) -> Result<f64, AnalyticsError> {
    let k = (spot / strike).ln();
    let ln_target = target.ln();
    let mut hi = (2.0 * (2.0 * k.abs()).sqrt()).max(1.0);
    while otm_total(spot, strike, hi) < target {
        hi *= 2.0;
        if hi > MAX_TOTAL_STD {
            return Err(AnalyticsError::NoConvergence);
        }
    }
    let mut lo = 0.0_f64;
    // Start from the at-the-money style guess, clamped into the bracket.
    let mut omega = (2.0 * k.abs()).sqrt().max(0.5 * hi).min(hi);
    if k.abs() < 1e-12 {
        omega = (2.0 * std::f64::consts::PI).sqrt() * target / spot;
        omega = omega.clamp(1e-8, hi);
    }
    for _ in 0..200 {
        let value = otm_total(spot, strike, omega);
        if value > target {
            hi = omega;
        } else {
            lo = omega;
        }
        if value == target {
            return Ok(omega);
        }
        let (_, d_plus) = d_pair(spot, strike, omega);
        let vega = spot * normal::pdf(d_plus);
        let mut next = if value > 0.0 && vega > 0.0 {
            omega - (value.ln() - ln_target) * value / vega
        } else {
            f64::NAN
        };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - omega).abs();
        omega = next;
        if step <= 1e-15 * omega.max(1e-3) || hi - lo <= 1e-15 * hi {
            return Ok(omega);
        }
    }
    Err(AnalyticsError::NoConvergence)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn intrinsic_limits() {
        let p = bs_price(&BsInputs::call(100.0, 100.0, 0.2, 0.0)).unwrap();
        assert_eq!(p, 0.0);
        let p = bs_price(&BsInputs::call(100.0, 80.0, 0.0, 1.0)).unwrap();
        assert_eq!(p, 20.0);
        let p = bs_price(&BsInputs::put(100.0, 80.0, 0.0, 1.0)).unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn at_the_money_reference() {
        // mpmath at 40 digits: 7.965567455405796293...
        let p = bs_price(&BsInputs::call(100.0, 100.0, 0.2, 1.0)).unwrap();
        assert!((p - 7.965_567_455_405_796).abs() < 1e-12, "{p}");
        let g = bs_greeks(&BsInputs::call(100.0, 100.0, 0.2, 1.0)).unwrap();
        assert!((g.vega - 39.695_254_747_701_18).abs() < 1e-11);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(bs_price(&BsInputs::call(f64::NAN, 100.0, 0.2, 1.0)).is_err());
        assert!(bs_price(&BsInputs::call(100.0, 100.0, f64::INFINITY, 1.0)).is_err());
        assert!(bs_price(&BsInputs::call(100.0, -1.0, 0.2, 1.0)).is_err());
    }

    #[test]
    fn greeks_zero_vanna_and_volga_points() {
        let (s, i, tau) = (100.0, 0.25_f64, 0.75);
        let k_minus = s * (-0.5 * i * i * tau).exp();
        let g = bs_greeks(&BsInputs::call(s, k_minus, i, tau)).unwrap();
        assert!(g.d_minus.abs() < 1e-15 && g.vanna.abs() < 1e-15);
        let k_plus = s * (0.5 * i * i * tau).exp();
        let g = bs_greeks(&BsInputs::call(s, k_plus, i, tau)).unwrap();
        assert!(g.d_plus.abs() < 1e-15 && g.volga.abs() < 1e-12);
        assert_eq!(
            bs_greeks(&BsInputs::call(s, s, 0.0, tau)),
            Err(AnalyticsError::Degenerate)
        );
        assert_eq!(
            bs_greeks(&BsInputs::call(s, s, 0.2, 0.0)),
            Err(AnalyticsError::Degenerate)
        );
    }

    #[test]
    fn implied_vol_round_trips() {
        let p = bs_price(&BsInputs::call(100.0, 100.0, 0.2, 1.0)).unwrap();
        assert!((implied_vol(p, 100.0, 100.0, 1.0, true).unwrap() - 0.2).abs() < 1e-10);
        let p = bs_price(&BsInputs::call(100.0, 120.0, 0.35, 0.5)).unwrap();
        assert!((implied_vol(p, 100.0, 120.0, 0.5, true).unwrap() - 0.35).abs() < 1e-10);
        assert_eq!(implied_vol(20.0, 100.0, 80.0, 1.0, true).unwrap(), 0.0);
    }

    #[test]
    fn implied_vol_reports_violated_bound() {
        match implied_vol(19.0, 100.0, 80.0, 1.0, true) {
            Err(AnalyticsError::Arbitrage { bound, limit, .. }) => {
                assert_eq!(bound, Bound::Lower);
                assert_eq!(limit, 20.0);
            }
            other => panic!("{other:?}"),
        }
        match implied_vol(100.0, 100.0, 80.0, 1.0, true) {
            Err(AnalyticsError::Arbitrage { bound, .. }) => assert_eq!(bound, Bound::Upper),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn deep_wing_inversion() {
        for &(k, v) in &[(40.0, 0.3), (250.0, 0.3), (100.0 * (-2.0f64).exp(), 0.15)] {
            let is_call = k >= 100.0;
            let p = otm_total(100.0, k, v);
            let got = implied_vol(p, 100.0, k, 1.0, is_call).unwrap();
            assert!((got - v).abs() < 1e-10, "{k}: {got}");
        }
    }

    proptest! {
        #[test]
        fn round_trip(vol in 0.01f64..2.0, tau in (1.0/365.0)..5.0f64, u in -3.0f64..3.0, call in any::<bool>()) {
            let s = 100.0;
            let k = s * (u * vol * tau.sqrt()).exp();
            let inputs = BsInputs { spot: s, strike: k, vol, tau, is_call: call };
            let p = bs_price(&inputs).unwrap();
            let back = implied_vol(p, s, k, tau, call).unwrap();
            let repriced = bs_price(&BsInputs { vol: back, ..inputs }).unwrap();
            prop_assert!((back - vol).abs() < 1e-10 || (repriced - p).abs() < 1e-12,
                "vol {vol} back {back} price {p}");
        }

        #[test]
        fn vanna_opposes_d_minus(vol in 0.05f64..1.0, tau in 0.05f64..3.0, u in -6.0f64..6.0) {
            let k = 100.0 * (u * vol * tau.sqrt()).exp();
            let g = bs_greeks(&BsInputs::call(100.0, k, vol, tau)).unwrap();
            prop_assert!(g.vanna * g.d_minus <= 0.0);
            prop_assert_eq!(g.vanna == 0.0, g.d_minus == 0.0);
        }

        #[test]
        fn finite_difference_vega(vol in 0.05f64..1.0, tau in 0.05f64..3.0, u in -1.0f64..1.0) {
            let k = 100.0 * (u * vol * tau.sqrt()).exp();
            let h = 1e-6;
            let up = bs_price(&BsInputs::call(100.0, k, vol + h, tau)).unwrap();
            let dn = bs_price(&BsInputs::call(100.0, k, vol - h, tau)).unwrap();
            let fd = (up - dn) / (2.0 * h);
            let g = bs_greeks(&BsInputs::call(100.0, k, vol, tau)).unwrap();
            prop_assert!((fd - g.vega).abs() <= 1e-6 * g.vega);
        }

        #[test]
        fn put_call_parity(vol in 0.0f64..2.0, tau in 0.0f64..5.0, k in 20.0f64..400.0) {
            let c = bs_price(&BsInputs::call(100.0, k, vol, tau)).unwrap();
            let p = bs_price(&BsInputs::put(100.0, k, vol, tau)).unwrap();
            prop_assert!((c - p - (100.0 - k)).abs() < 1e-12);
        }

        #[test]
        fn monotone_in_vol(vol in 0.01f64..1.5, tau in 0.05f64..3.0, k in 50.0f64..200.0) {
            let a = bs_price(&BsInputs::call(100.0, k, vol, tau)).unwrap();
            let b = bs_price(&BsInputs::call(100.0, k, vol * 1.01, tau)).unwrap();
            prop_assert!(b >= a);
        }
    }
}
