//! Standard normal distribution helpers.
//!
//! The CDF is evaluated through `libm::erfc`, a port of the FreeBSD/musl
//! implementation with sub-ulp relative accuracy over the whole real line.
//! Writing `N(x) = ½·erfc(−x/√2)` keeps full relative precision in the left
//! tail, which matters for deep out-of-the-money wings of the adjusted smile.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density φ(x).
#[inline]
pub fn pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function Φ(x).
#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// `ln φ(x)`, used where the density underflows.
#[inline]
pub fn ln_pdf(x: f64) -> f64 {
    -0.5 * x * x - 0.5 * (2.0 * PI).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_and_normalised() {
        assert_eq!(cdf(0.0), 0.5);
        for &x in &[0.1, 0.7, 1.5, 3.0, 6.0] {
            assert!((cdf(x) + cdf(-x) - 1.0).abs() < 1e-16);
        }
        assert!((pdf(0.0) - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-17);
        assert!((ln_pdf(1.3) - pdf(1.3).ln()).abs() < 1e-15);
    }

    #[test]
    fn reference_values() {
        // mpmath, 40 digits
        assert!((cdf(0.2) - 0.579_259_709_439_103_0).abs() < 3e-16);
        assert!((cdf(-8.0) / 6.220_960_574_271_784e-16 - 1.0).abs() < 1e-14);
        assert!((cdf(1.0) - 0.841_344_746_068_542_9).abs() < 3e-16);
    }
}
