//! Zero-vanna point of the adjusted smile and the seasoned volatility swap
//! price read off it, plus the exact Black-Scholes term-structure price.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adjusted::{AdjustConfig, AdjustedError, AdjustedSmile, RealizedState, Warning};
use crate::normal;
use crate::quadrature;
use crate::smile::MarketSmile;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VolSwapError {
    #[error("zero-vanna condition has no sign change on the strike grid [{lo}, {hi}]")]
    Bracketing { lo: f64, hi: f64 },
    #[error("zero-vanna implied vol is not positive")]
    NonPositiveVol,
    #[error("invalid term structure: {0}")]
    TermStructure(&'static str),
    #[error(transparent)]
    Adjusted(#[from] AdjustedError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroVannaQuote {
    pub spot: f64,
    /// Zero-vanna strike `K₋`.
    pub strike: f64,
    /// Adjusted implied vol `Iᴴ₋` at `K₋`.
    pub vol: f64,
    /// `Iᴴ₋√τ`.
    pub total_std: f64,
    /// `∂(Iᴴ√τ)/∂ln K` at `K₋`.
    pub slope: f64,
    /// `∂(Iᴴ√τ)/∂d₋` at `d₋ = 0`, from the same local fit as the convexity.
    pub dminus_slope: f64,
    /// `∂²(Iᴴ√τ)/∂d₋²` at `d₋ = 0`.
    pub dminus_convexity: f64,
    pub realized: RealizedState,
    pub warnings: Vec<Warning>,
}

const FIT_NODES: usize = 5;

pub fn zero_vanna_point(adj: &AdjustedSmile) -> Result<ZeroVannaQuote, VolSwapError> {
    let ln_s = adj.spot().ln();
    let g = |x: f64| ln_s - x - 0.5 * adj.interpolant.total_variance_at_log(x);
    let xs: Vec<f64> = adj.nodes.iter().map(|n| n.strike.ln()).collect();
    let mut bracket = None;
    for w in xs.windows(2) {
        if g(w[0]) >= 0.0 && g(w[1]) <= 0.0 {
            bracket = Some((w[0], w[1]));
            break;
        }
    }
    let (mut lo, mut hi) = bracket.ok_or(VolSwapError::Bracketing {
        lo: adj.nodes[0].strike,
        hi: adj.nodes[adj.nodes.len() - 1].strike,
    })?;
    // g is positive on the left of the root
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    let strike = x.exp();
    let total_var = adj.interpolant.total_variance_at_log(x);
    if !(total_var > 0.0) {
        return Err(VolSwapError::NonPositiveVol);
    }
    let total_std = total_var.sqrt();
    let tau = adj.tau();
    let slope = adj.interpolant.slope(strike);
    let mut warnings = adj.warnings.clone();
    if slope.wing {
        warnings.push(Warning::SlopeInWing { strike });
    }
    let (dminus_slope, dminus_convexity) = local_quadratic(adj);
    Ok(ZeroVannaQuote {
        spot: adj.spot(),
        strike,
        vol: total_std / tau.sqrt(),
        total_std,
        slope: slope.value,
        dminus_slope,
        dminus_convexity,
        realized: adj.realized,
        warnings,
    })
}

/// Least-squares quadratic through the nodes nearest `d₋ = 0`; returns the
/// first and second derivatives there.
fn local_quadratic(adj: &AdjustedSmile) -> (f64, f64) {
    let mut nearest: Vec<_> = adj.dminus_nodes.iter().collect();
    nearest.sort_by(|a, b| a.d_minus.abs().total_cmp(&b.d_minus.abs()));
    nearest.truncate(FIT_NODES);
    // normal equations for y = a + b d + c d²
    let mut m = [[0.0f64; 3]; 3];
    let mut r = [0.0f64; 3];
    for n in &nearest {
        let basis = [1.0, n.d_minus, n.d_minus * n.d_minus];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += basis[i] * basis[j];
            }
            r[i] += basis[i] * n.total_std;
        }
    }
    let coef = solve3(m, r);
    (coef[1], 2.0 * coef[2])
}

fn solve3(mut m: [[f64; 3]; 3], mut r: [f64; 3]) -> [f64; 3] {
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        m.swap(col, pivot);
        r.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            r[row] -= f * r[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| m[row][k] * x[k]).sum();
        x[row] = (r[row] - tail) / m[row][row];
    }
    x
}

#[derive(Debug, Clone)]
pub struct SeasonedPrice {
    /// Annualised volatility.
    pub price: f64,
    pub zero_vanna: ZeroVannaQuote,
    pub adjusted: AdjustedSmile,
}

/// Builds the adjusted smile, finds its zero-vanna point and returns
/// `Iᴴ₋·√(τ/T)`.
pub fn price_seasoned(
    smile: &MarketSmile,
    realized: &RealizedState,
    cfg: &AdjustConfig,
) -> Result<SeasonedPrice, VolSwapError> {
    let adjusted = AdjustedSmile::build(smile, realized, cfg)?;
    let zero_vanna = zero_vanna_point(&adjusted)?;
    let price = zero_vanna.vol * (realized.tau() / realized.expiry).sqrt();
    Ok(SeasonedPrice {
        price,
        zero_vanna,
        adjusted,
    })
}

pub fn seasoned_volswap_price(
    smile: &MarketSmile,
    realized: &RealizedState,
    cfg: &AdjustConfig,
) -> Result<f64, VolSwapError> {
    Ok(price_seasoned(smile, realized, cfg)?.price)
}

/// Piecewise-constant deterministic volatility starting at time zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermStructure {
    /// Right end points of each segment, strictly increasing.
    pub ends: Vec<f64>,
    pub vols: Vec<f64>,
}

impl TermStructure {
    pub fn new(ends: Vec<f64>, vols: Vec<f64>) -> Result<Self, VolSwapError> {
        if ends.is_empty() || ends.len() != vols.len() {
            return Err(VolSwapError::TermStructure("need one vol per segment"));
        }
        if !(ends[0] > 0.0) || !ends.windows(2).all(|w| w[0] < w[1]) {
            return Err(VolSwapError::TermStructure(
                "segment ends must be positive and increasing",
            ));
        }
        if vols.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(VolSwapError::TermStructure("negative or non-finite vol"));
        }
        Ok(Self { ends, vols })
    }

    pub fn constant(vol: f64, horizon: f64) -> Result<Self, VolSwapError> {
        Self::new(vec![horizon], vec![vol])
    }

    /// `∫ₐᵇσ²du`; the last segment extends to infinity.
    pub fn integrated_variance(&self, a: f64, b: f64) -> f64 {
        let mut start = 0.0;
        let mut total = 0.0;
        for (i, (&end, &vol)) in self.ends.iter().zip(&self.vols).enumerate() {
            let end = if i + 1 == self.ends.len() { f64::INFINITY } else { end };
            let lo = a.max(start);
            let hi = b.min(end);
            if hi > lo {
                total += vol * vol * (hi - lo);
            }
            start = end;
        }
        total
    }

    pub fn vol_at(&self, u: f64) -> f64 {
        let i = self.ends.partition_point(|&e| e <= u).min(self.vols.len() - 1);
        self.vols[i]
    }
}

/// Exact seasoned volatility swap price in a deterministic-volatility world:
/// `√((1/T)∫₀ᵗσ² + (1/T)∫ₜᵀσ²)`.
pub fn bs_exact_seasoned_price(
    term: &TermStructure,
    t: f64,
    expiry: f64,
) -> Result<f64, VolSwapError> {
    if !(t >= 0.0 && expiry > t) {
        return Err(VolSwapError::TermStructure("need 0 <= t < T"));
    }
    if term.vols.iter().any(|v| *v < 0.0) {
        return Err(VolSwapError::TermStructure("negative vol"));
    }
    let past = term.integrated_variance(0.0, t);
    let future = term.integrated_variance(t, expiry);
    Ok(((past + future) / expiry).sqrt())
}

/// Both sides of `∫Φ(a + bx)φ(x)dx = Φ(a/√(1+b²))`; the left by composite
/// Gauss–Legendre on `[−12, 12]`.
pub fn gaussian_identity_check(a: f64, b: f64) -> (f64, f64) {
    let breaks: Vec<f64> = (0..=96).map(|i| -12.0 + 0.25 * i as f64).collect();
    let (x, w) = quadrature::composite_legendre(&breaks, 12);
    let lhs = quadrature::compensated_sum(
        x.iter()
            .zip(&w)
            .map(|(&x, &w)| w * normal::cdf(a + b * x) * normal::pdf(x)),
    );
    let rhs = normal::cdf(a / (1.0 + b * b).sqrt());
    (lhs, rhs)
}
