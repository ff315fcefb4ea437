//! Standard normal density and distribution function.

use std::f64::consts::FRAC_1_SQRT_2;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal PDF.
#[inline]
pub fn pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF, accurate in both tails.
#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Density of `Normal(mean, variance)` at `t`.
#[inline]
pub fn density(t: f64, mean: f64, variance: f64) -> f64 {
    let sd = variance.sqrt();
    pdf((t - mean) / sd) / sd
}
