//! Activation functions with analytically coded derivatives up to third
//! order. The PDE residual needs exact second derivatives of the network,
//! and reverse accumulation over those jets needs one order more, so the
//! GELU is the exact error-function form rather than the tanh fit.

use std::f64::consts::PI;

fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// `gelu(z) = z * Phi(z)` with the exact Gaussian CDF.
pub fn gelu(z: f64) -> f64 {
    z * norm_cdf(z)
}

/// Value and first three derivatives of the GELU at `z`.
pub fn gelu_derivs(z: f64) -> (f64, f64, f64, f64) {
    let phi = norm_pdf(z);
    let cdf = norm_cdf(z);
    let d1 = cdf + z * phi;
    let d2 = phi * (2.0 - z * z);
    let d3 = phi * (z * z * z - 4.0 * z);
    (z * cdf, d1, d2, d3)
}

/// Numerically stable softplus `ln(1 + e^z) = max(z, 0) + ln(1 + e^{-|z|})`.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Value and first three derivatives of the softplus at `z`.
pub fn softplus_derivs(z: f64) -> (f64, f64, f64, f64) {
    let s = sigmoid(z);
    let d2 = s * (1.0 - s);
    (softplus(z), s, d2, d2 * (1.0 - 2.0 * s))
}
