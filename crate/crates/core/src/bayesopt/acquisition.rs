//! Expected-improvement acquisition.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use statrs::function::erf::erfc;

/// Standard normal density.
#[inline]
pub fn normal_pdf(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * PI).sqrt()
}

/// Standard normal distribution function.
#[inline]
pub fn normal_cdf(u: f64) -> f64 {
    0.5 * erfc(-u * FRAC_1_SQRT_2)
}

/// `phi(u) + u Phi(u)` for `u < -5` via a continued fraction for the Mills
/// ratio, avoiding cancellation in the tail.
fn tail_factor(u: f64) -> f64 {
    let t = -u;
    let mut k = 0.0;
    for j in (2..=60).rev() {
        k = (j - 1) as f64 / (t + k);
    }
    // k = 1 / (t + 2 / (t + 3 / ...)), and phi + u Phi = phi * k / (t + k)
    normal_pdf(u) * k / (t + k)
}

/// Expected improvement of a Gaussian `N(mu, sigma^2)` over `l_star`.
pub fn expected_improvement(mu: f64, sigma: f64, l_star: f64) -> f64 {
    debug_assert!(sigma >= 0.0);
    let gap = mu - l_star;
    if sigma <= 0.0 {
        return gap.max(0.0);
    }
    let u = gap / sigma;
    let ei = if u < -5.0 {
        sigma * tail_factor(u)
    } else {
        gap * normal_cdf(u) + sigma * normal_pdf(u)
    };
    ei.max(0.0)
}
