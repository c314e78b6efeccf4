//! Normal distribution and gamma-function helpers.
//!
//! Upper tails go through `erfc` so that probabilities such as `1 - Φ(6)`
//! keep full relative precision. The error functions come from `libm`.

use statrs::function::gamma as sgamma;
use std::f64::consts::{PI, SQRT_2};

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

pub fn ln_norm_pdf(x: f64, var: f64) -> f64 {
    -0.5 * x * x / var - 0.5 * var.ln() - LN_SQRT_2PI
}

/// Standard normal CDF Φ(x).
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal upper tail 1 − Φ(x).
pub fn norm_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// Two-sided tail Pr(|Z| > x) for x ≥ 0.
pub fn two_sided_tail(x: f64) -> f64 {
    libm::erfc(x.abs() / SQRT_2)
}

/// Pr(|Z| < x) = 2Φ(x) − 1 for x ≥ 0.
pub fn central_prob(x: f64) -> f64 {
    libm::erf(x.abs() / SQRT_2)
}

pub fn gamma(x: f64) -> f64 {
    sgamma::gamma(x)
}

pub fn ln_gamma(x: f64) -> f64 {
    sgamma::ln_gamma(x)
}

/// Density of the standard half-Cauchy distribution on (0, ∞).
pub fn half_cauchy_pdf(x: f64) -> f64 {
    2.0 / (PI * (1.0 + x * x))
}

/// `log(exp(a) + exp(b))` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}
