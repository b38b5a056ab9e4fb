//! Black–Scholes closed forms. These back the degenerate-volatility checks
//! of the semi-analytic pricer and serve as an independent reference in the
//! test suites.

use std::f64::consts::PI;

/// Standard normal CDF via the complementary error function.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

fn d1_d2(s: f64, k: f64, r: f64, sigma: f64, tau: f64) -> (f64, f64) {
    let sd = sigma * tau.sqrt();
    let d1 = ((s / k).ln() + (r + 0.5 * sigma * sigma) * tau) / sd;
    (d1, d1 - sd)
}

pub fn call_price(s: f64, k: f64, r: f64, sigma: f64, tau: f64) -> f64 {
    if tau <= 0.0 || sigma <= 0.0 {
        return (s - k * (-r * tau.max(0.0)).exp()).max(0.0);
    }
    let (d1, d2) = d1_d2(s, k, r, sigma, tau);
    s * norm_cdf(d1) - k * (-r * tau).exp() * norm_cdf(d2)
}

pub fn call_delta(s: f64, k: f64, r: f64, sigma: f64, tau: f64) -> f64 {
    if tau <= 0.0 || sigma <= 0.0 {
        return if s > k { 1.0 } else { 0.0 };
    }
    norm_cdf(d1_d2(s, k, r, sigma, tau).0)
}

pub fn call_gamma(s: f64, k: f64, r: f64, sigma: f64, tau: f64) -> f64 {
    if tau <= 0.0 || sigma <= 0.0 {
        return 0.0;
    }
    let (d1, _) = d1_d2(s, k, r, sigma, tau);
    norm_pdf(d1) / (s * sigma * tau.sqrt())
}
