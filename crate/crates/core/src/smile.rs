//! Single-expiry implied-volatility smile.
//!
//! Quotes are interpolated with a monotone (Fritsch–Butland/PCHIP) cubic
//! Hermite spline in `(ln K, I²τ)`. The node slopes follow the weighted
//! harmonic mean rule used by SciPy's `PchipInterpolator`, including its
//! one-sided three-point end conditions, so the interpolant is C¹, passes
//! through every quote and never overshoots between nodes. Outside the quoted
//! range total implied variance is held constant.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmileError {
    #[error("smile has no quotes")]
    Empty,
    #[error("smile needs at least {min} quotes, got {got}")]
    TooFewQuotes { min: usize, got: usize },
    #[error("invalid quote at strike {strike}: {reason}")]
    InvalidQuote { strike: f64, reason: &'static str },
    #[error("duplicate strike {0}")]
    DuplicateStrike(f64),
    #[error("invalid smile metadata: {0}")]
    Metadata(&'static str),
    #[error("quotes do not bracket the zero-vanna region around strike {0:.6}")]
    NoZeroVannaCoverage(f64),
}

pub const MIN_QUOTES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quote {
    pub strike: f64,
    pub implied_vol: f64,
}

impl Quote {
    pub fn new(strike: f64, implied_vol: f64) -> Self {
        Self {
            strike,
            implied_vol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Monotone cubic in log-strike on total implied variance, flat total
    /// variance outside the quotes.
    #[default]
    MonotoneCubicTotalVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Slope {
    /// `∂(I√τ)/∂ln K`.
    pub value: f64,
    /// Set when the query falls in the extrapolated wings.
    pub wing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarketSmile {
    t: f64,
    expiry: f64,
    spot: f64,
    quotes: Vec<Quote>,
    interp: Interpolation,
    #[serde(skip)]
    curve: MonotoneCubic,
}

impl MarketSmile {
    /// Build a smile; quotes are sorted by strike first.
    pub fn new(spot: f64, t: f64, expiry: f64, quotes: Vec<Quote>) -> Result<Self, SmileError> {
        let smile = Self::new_unchecked_coverage(spot, t, expiry, quotes)?;
        let atm = smile.vol(spot);
        let anticipated = spot * (-0.5 * atm * atm * smile.tau()).exp();
        let lo = smile.quotes[0].strike;
        let hi = smile.quotes[smile.quotes.len() - 1].strike;
        if !(lo < anticipated && hi > anticipated) {
            return Err(SmileError::NoZeroVannaCoverage(anticipated));
        }
        Ok(smile)
    }

    /// Build a smile without requiring coverage of the zero-vanna region.
    /// Used for model-generated smiles whose strikes are chosen elsewhere.
    pub fn new_unchecked_coverage(
        spot: f64,
        t: f64,
        expiry: f64,
        mut quotes: Vec<Quote>,
    ) -> Result<Self, SmileError> {
        if !(spot.is_finite() && spot > 0.0) {
            return Err(SmileError::Metadata("spot must be positive and finite"));
        }
        if !(t.is_finite() && expiry.is_finite() && t >= 0.0) {
            return Err(SmileError::Metadata("times must be finite and t >= 0"));
        }
        if expiry <= t {
            return Err(SmileError::Metadata("expiry must be after valuation time"));
        }
        if quotes.is_empty() {
            return Err(SmileError::Empty);
        }
        if quotes.len() < MIN_QUOTES {
            return Err(SmileError::TooFewQuotes {
                min: MIN_QUOTES,
                got: quotes.len(),
            });
        }
        for q in &quotes {
            if !(q.strike.is_finite() && q.strike > 0.0) {
                return Err(SmileError::InvalidQuote {
                    strike: q.strike,
                    reason: "strike must be positive and finite",
                });
            }
            if !(q.implied_vol.is_finite() && q.implied_vol > 0.0) {
                return Err(SmileError::InvalidQuote {
                    strike: q.strike,
                    reason: "implied vol must be positive and finite",
                });
            }
        }
        quotes.sort_by(|a, b| a.strike.total_cmp(&b.strike));
        for w in quotes.windows(2) {
            if w[0].strike == w[1].strike {
                return Err(SmileError::DuplicateStrike(w[0].strike));
            }
        }
        let tau = expiry - t;
        let log_strikes: Vec<f64> = quotes.iter().map(|q| q.strike.ln()).collect();
        let total_var: Vec<f64> = quotes
            .iter()
            .map(|q| q.implied_vol * q.implied_vol * tau)
            .collect();
        Ok(Self {
            t,
            expiry,
            spot,
            quotes,
            interp: Interpolation::MonotoneCubicTotalVariance,
            curve: MonotoneCubic::new(log_strikes, total_var),
        })
    }

    /// Same quotes and times with a different spot.
    pub fn with_spot(&self, spot: f64) -> Result<Self, SmileError> {
        Self::new_unchecked_coverage(spot, self.t, self.expiry, self.quotes.clone())
    }

    pub fn spot(&self) -> f64 {
        self.spot
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn expiry(&self) -> f64 {
        self.expiry
    }

    pub fn tau(&self) -> f64 {
        self.expiry - self.t
    }

    pub fn quotes(&self) -> &[Quote] {
        &self.quotes
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interp
    }

    pub fn min_strike(&self) -> f64 {
        self.quotes[0].strike
    }

    pub fn max_strike(&self) -> f64 {
        self.quotes[self.quotes.len() - 1].strike
    }

    pub fn in_range(&self, strike: f64) -> bool {
        strike >= self.min_strike() && strike <= self.max_strike()
    }

    /// Total implied variance `I²τ` at log-strike `x`.
    pub fn total_variance_at_log(&self, x: f64) -> f64 {
        self.curve.eval(x)
    }

    pub fn total_variance(&self, strike: f64) -> f64 {
        self.total_variance_at_log(strike.ln())
    }

    /// Total implied standard deviation `I√τ`.
    pub fn total_std(&self, strike: f64) -> f64 {
        self.total_variance(strike).max(0.0).sqrt()
    }

    /// Interpolated implied vol; strike must be positive.
    pub fn vol(&self, strike: f64) -> f64 {
        debug_assert!(strike > 0.0);
        (self.total_variance(strike).max(0.0) / self.tau()).sqrt()
    }

    /// `∂(I√τ)/∂ln K` by a central difference with log-strike bump `1e-3`.
    /// Queries outside the quotes return zero with the wing flag set.
    pub fn slope(&self, strike: f64) -> Slope {
        const BUMP: f64 = 1e-3;
        let x = strike.ln();
        let (lo, hi) = (self.curve.x_min(), self.curve.x_max());
        if x < lo || x > hi {
            return Slope {
                value: 0.0,
                wing: true,
            };
        }
        let up = self.total_variance_at_log(x + BUMP).max(0.0).sqrt();
        let dn = self.total_variance_at_log(x - BUMP).max(0.0).sqrt();
        Slope {
            value: (up - dn) / (2.0 * BUMP),
            wing: x + BUMP > hi || x - BUMP < lo,
        }
    }

    /// Market call price `C(S, K)` under this smile.
    pub fn call_price(&self, strike: f64) -> f64 {
        crate::analytics::call_total(self.spot, strike, self.total_std(strike))
    }

    pub fn put_price(&self, strike: f64) -> f64 {
        crate::analytics::put_total(self.spot, strike, self.total_std(strike))
    }
}

/// Monotone cubic Hermite interpolant with constant extrapolation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    /// `x` must be strictly increasing and non-empty.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        assert!(!x.is_empty() && x.len() == y.len());
        let slopes = pchip_slopes(&x, &y);
        Self { x, y, slopes }
    }

    pub fn x_min(&self) -> f64 {
        self.x[0]
    }

    pub fn x_max(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    pub fn knots(&self) -> &[f64] {
        &self.x
    }

    pub fn eval(&self, x: f64) -> f64 {
        let xs = &self.x;
        let n = xs.len();
        if !(x > xs[0]) {
            return self.y[0];
        }
        if x >= xs[n - 1] {
            return self.y[n - 1];
        }
        let i = xs.partition_point(|&v| v <= x) - 1;
        hermite(
            x,
            xs[i],
            xs[i + 1],
            self.y[i],
            self.y[i + 1],
            self.slopes[i],
            self.slopes[i + 1],
        )
    }
}

#[inline]
fn hermite(x: f64, x0: f64, x1: f64, y0: f64, y1: f64, m0: f64, m1: f64) -> f64 {
    let h = x1 - x0;
    let s = (x - x0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1
}

/// Node derivatives for the monotone cubic (PCHIP) interpolant.
pub(crate) fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 1 {
        return vec![0.0];
    }
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    if n == 2 {
        return vec![delta[0], delta[0]];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        let (m0, m1) = (delta[k - 1], delta[k]);
        if m0 * m1 <= 0.0 || m0 == 0.0 || m1 == 0.0 {
            d[k] = 0.0;
        } else {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / m0 + w2 / m1);
        }
    }
    d[0] = edge_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = edge_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

fn edge_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d.signum() != m0.signum() || m0 == 0.0 {
        0.0
    } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> MarketSmile {
        MarketSmile::new(
            100.0,
            0.0,
            1.0,
            vec![
                Quote::new(85.0, 0.23),
                Quote::new(90.0, 0.21),
                Quote::new(95.0, 0.19),
                Quote::new(105.0, 0.21),
                Quote::new(110.0, 0.22),
                Quote::new(120.0, 0.24),
            ],
        )
        .unwrap()
    }

    #[test]
    fn reproduces_quotes() {
        let s = sample();
        for q in s.quotes() {
            assert!((s.vol(q.strike) - q.implied_vol).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_independent_pchip_evaluation() {
        // scipy.interpolate.PchipInterpolator on (ln K, I²τ), then √(·/τ)
        let s = sample();
        assert!((s.vol(100.0) - 0.197_842_323_138_830_43).abs() < 1e-14);
        assert!((s.vol(92.0) - 0.200_101_948_586_240_59).abs() < 1e-14);
    }

    #[test]
    fn flat_smile_everywhere() {
        let quotes = (0..7).map(|i| Quote::new(70.0 + 10.0 * i as f64, 0.2)).collect();
        let s = MarketSmile::new(100.0, 0.25, 1.25, quotes).unwrap();
        for &k in &[1.0, 55.0, 83.3, 100.0, 131.0, 1e4] {
            assert!((s.vol(k) - 0.2).abs() < 1e-15);
            assert_eq!(s.slope(k).value, 0.0);
        }
        assert!(s.slope(1e4).wing);
        assert!(!s.slope(100.0).wing);
    }

    #[test]
    fn flat_total_variance_extrapolation() {
        let s = sample();
        assert_eq!(s.vol(10.0), 0.23);
        assert_eq!(s.vol(500.0), 0.24);
        let sl = s.slope(500.0);
        assert!(sl.wing && sl.value == 0.0);
    }

    #[test]
    fn linear_total_std_slope() {
        let (a, b, tau) = (0.3, -0.05, 0.5_f64);
        let quotes = (0..401)
            .map(|i| {
                let x = (100.0f64).ln() - 0.2 + 1e-3 * i as f64;
                Quote::new(x.exp(), (a + b * x) / tau.sqrt())
            })
            .collect();
        let s = MarketSmile::new(100.0, 0.0, tau, quotes).unwrap();
        let k = s.quotes()[200].strike;
        assert!((s.slope(k).value - b).abs() < 1e-8, "{}", s.slope(k).value);
    }

    #[test]
    fn construction_errors() {
        assert_eq!(
            MarketSmile::new(100.0, 0.0, 1.0, vec![]).unwrap_err(),
            SmileError::Empty
        );
        let few = vec![Quote::new(90.0, 0.2), Quote::new(110.0, 0.2)];
        assert!(matches!(
            MarketSmile::new(100.0, 0.0, 1.0, few),
            Err(SmileError::TooFewQuotes { .. })
        ));
        let mut q: Vec<Quote> = (0..5).map(|i| Quote::new(90.0 + 5.0 * i as f64, 0.2)).collect();
        q[2].implied_vol = -0.1;
        assert!(matches!(
            MarketSmile::new(100.0, 0.0, 1.0, q.clone()),
            Err(SmileError::InvalidQuote { .. })
        ));
        q[2].implied_vol = f64::NAN;
        assert!(MarketSmile::new(100.0, 0.0, 1.0, q.clone()).is_err());
        q[2].implied_vol = 0.2;
        q[3].strike = q[2].strike;
        assert!(matches!(
            MarketSmile::new(100.0, 0.0, 1.0, q),
            Err(SmileError::DuplicateStrike(_))
        ));
        let high: Vec<Quote> = (0..5).map(|i| Quote::new(101.0 + i as f64, 0.2)).collect();
        assert!(matches!(
            MarketSmile::new(100.0, 0.0, 1.0, high),
            Err(SmileError::NoZeroVannaCoverage(_))
        ));
        let ok: Vec<Quote> = (0..5).map(|i| Quote::new(90.0 + 5.0 * i as f64, 0.2)).collect();
        assert!(MarketSmile::new(100.0, 1.0, 1.0, ok).is_err());
    }

    proptest! {
        #[test]
        fn order_invariant(seed in any::<u64>()) {
            let base = sample();
            let mut q = base.quotes().to_vec();
            // deterministic shuffle from seed
            let mut state = seed | 1;
            for i in (1..q.len()).rev() {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                q.swap(i, (state % (i as u64 + 1)) as usize);
            }
            let shuffled = MarketSmile::new(100.0, 0.0, 1.0, q).unwrap();
            for k in [60.0, 88.0, 97.5, 100.0, 117.0, 300.0] {
                prop_assert_eq!(shuffled.vol(k), base.vol(k));
            }
        }

        #[test]
        fn no_overshoot(x in (85.0f64).ln()..(120.0f64).ln()) {
            let s = sample();
            let xs = s.curve.knots();
            let i = xs.partition_point(|&v| v <= x).min(xs.len() - 1).max(1);
            let (a, b) = (s.curve.y[i - 1], s.curve.y[i]);
            let w = s.total_variance_at_log(x);
            prop_assert!(w >= a.min(b) - 1e-15 && w <= a.max(b) + 1e-15);
        }
    }
}
