//! Independent ground-truth pricers: the Fourier-based semi-analytic Heston
//! price and Greeks, plus a Monte Carlo simulator. These back every accuracy
//! claim about the learned operator and are never used in training.

mod black_scholes;
mod charfn;
mod mc;
mod quad;

pub use black_scholes::{call_delta as bs_delta, call_gamma as bs_gamma, call_price as bs_price};
pub use black_scholes::{norm_cdf, norm_pdf};
pub use charfn::heston_char_fn;
pub use mc::{price_call_mc, McEstimate, McScheme, McSpec};
pub use quad::GaussLegendre;

use crate::domain::{payoff, HestonParams};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum OracleError {
    #[error("numerical instability in characteristic function at u = {u_re}+{u_im}i, params {params:?}, tau {tau}")]
    NumericalInstability {
        u_re: f64,
        u_im: f64,
        params: HestonParams,
        tau: f64,
    },
    #[error("quadrature did not converge: estimated residual {residual} > tol {tol}")]
    QuadratureNonConvergence { residual: f64, tol: f64 },
    #[error("Feller condition violated for {0:?}")]
    FellerViolated(HestonParams),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuadScheme {
    GaussLegendre,
}

/// Controls for the Fourier integrals: rule order per panel, the base
/// truncation point of the semi-infinite integral, and the panel-doubling
/// tolerance. Segments past the base limit keep doubling in width until a
/// whole segment contributes less than the tail cutoff, which matters for
/// short maturities and high vol-of-vol where the integrand decays slowly.
#[derive(Clone, Copy, Debug)]
pub struct QuadratureSpec {
    pub nodes: usize,
    pub upper_limit: f64,
    pub tol: f64,
    pub scheme: QuadScheme,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            nodes: 64,
            upper_limit: 200.0,
            tol: 1e-10,
            scheme: QuadScheme::GaussLegendre,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<(), OracleError> {
        if self.nodes < 64 {
            return Err(OracleError::InvalidInput(format!(
                "node count {} below minimum 64",
                self.nodes
            )));
        }
        if !(self.upper_limit > 0.0) {
            return Err(OracleError::InvalidInput(format!(
                "integration upper limit {} must be positive",
                self.upper_limit
            )));
        }
        if !(self.tol > 0.0) {
            return Err(OracleError::InvalidInput(format!(
                "tolerance {} must be positive",
                self.tol
            )));
        }
        Ok(())
    }
}

const TAIL_CUTOFF_FACTOR: f64 = 1e-3;
const MAX_TAIL_SEGMENTS: usize = 14;
const MAX_PANELS: usize = 512;

fn validate_query(p: &HestonParams, nu0: f64, tau: f64) -> Result<(), OracleError> {
    if !p.feller_holds() {
        return Err(OracleError::FellerViolated(*p));
    }
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(OracleError::InvalidInput(format!(
            "tau = {tau} must be a finite nonnegative number"
        )));
    }
    if !(nu0 > 0.0) || !nu0.is_finite() {
        return Err(OracleError::InvalidInput(format!(
            "nu0 = {nu0} must be positive"
        )));
    }
    Ok(())
}

/// The two in-the-money probabilities `P1` (share measure) and `P2`
/// (risk-neutral), via `psi(u - i)` and `psi(u)` respectively.
fn probabilities(
    p: &HestonParams,
    x: f64,
    nu0: f64,
    tau: f64,
    spec: &QuadratureSpec,
) -> Result<(f64, f64), OracleError> {
    let rule = GaussLegendre::new(spec.nodes);
    let w = x + p.r * tau;
    let mut failure: Option<OracleError> = None;
    let mut integral = |shift: Complex64| -> Result<f64, OracleError> {
        let mut integrand = |u: f64| -> f64 {
            if failure.is_some() {
                return 0.0;
            }
            match charfn::heston_psi(Complex64::new(u, 0.0) + shift, p, nu0, tau) {
                Ok(psi) => {
                    let phase = Complex64::new(0.0, u * w).exp();
                    (phase * psi / Complex64::new(0.0, u)).re
                }
                Err(e) => {
                    failure = Some(e);
                    0.0
                }
            }
        };
        let mut total = 0.0;
        let (mut lo, mut hi) = (0.0, spec.upper_limit);
        for segment in 0..MAX_TAIL_SEGMENTS {
            let part = rule.integrate_adaptive(&mut integrand, lo, hi, spec.tol, MAX_PANELS)?;
            total += part;
            if segment > 0 && part.abs() < spec.tol * TAIL_CUTOFF_FACTOR {
                if let Some(e) = failure.take() {
                    return Err(e);
                }
                return Ok(total);
            }
            lo = hi;
            hi *= 2.0;
        }
        Err(OracleError::QuadratureNonConvergence {
            residual: total.abs(),
            tol: spec.tol,
        })
    };
    let i1 = integral(Complex64::new(0.0, -1.0))?;
    let i2 = integral(Complex64::new(0.0, 0.0))?;
    let p1 = (0.5 + i1 / std::f64::consts::PI).clamp(0.0, 1.0);
    let p2 = (0.5 + i2 / std::f64::consts::PI).clamp(0.0, 1.0);
    Ok((p1, p2))
}

/// Semi-analytic call price in currency units, `V = K * u`. The price is
/// floored at zero; quadrature noise deep out of the money can otherwise
/// produce a tiny negative value.
pub fn price_call_with(
    p: &HestonParams,
    x: f64,
    nu0: f64,
    tau: f64,
    strike: f64,
    spec: &QuadratureSpec,
) -> Result<f64, OracleError> {
    spec.validate()?;
    validate_query(p, nu0, tau)?;
    if tau == 0.0 {
        return Ok(strike * payoff(x));
    }
    let (p1, p2) = probabilities(p, x, nu0, tau, spec)?;
    Ok((strike * (x.exp() * p1 - (-p.r * tau).exp() * p2)).max(0.0))
}

pub fn price_call(
    p: &HestonParams,
    x: f64,
    nu0: f64,
    tau: f64,
    strike: f64,
) -> Result<f64, OracleError> {
    price_call_with(p, x, nu0, tau, strike, &QuadratureSpec::default())
}

/// European put from the same probability integrals (not from parity), so
/// put-call parity is a genuine cross-check of the quadrature.
pub fn price_put_with(
    p: &HestonParams,
    x: f64,
    nu0: f64,
    tau: f64,
    strike: f64,
    spec: &QuadratureSpec,
) -> Result<f64, OracleError> {
    spec.validate()?;
    validate_query(p, nu0, tau)?;
    if tau == 0.0 {
        return Ok(strike * (1.0 - x.exp()).max(0.0));
    }
    let (p1, p2) = probabilities(p, x, nu0, tau, spec)?;
    Ok((strike * ((-p.r * tau).exp() * (1.0 - p2) - x.exp() * (1.0 - p1))).max(0.0))
}

pub fn price_put(
    p: &HestonParams,
    x: f64,
    nu0: f64,
    tau: f64,
    strike: f64,
) -> Result<f64, OracleError> {
    price_put_with(p, x, nu0, tau, strike, &QuadratureSpec::default())
}

/// Call Delta via the homogeneity identity `Delta = P1`.
pub fn delta_oracle(p: &HestonParams, x: f64, nu0: f64, tau: f64) -> Result<f64, OracleError> {
    let spec = QuadratureSpec::default();
    validate_query(p, nu0, tau)?;
    if tau == 0.0 {
        return Ok(if x > 0.0 {
            1.0
        } else if x == 0.0 {
            0.5
        } else {
            0.0
        });
    }
    let (p1, _) = probabilities(p, x, nu0, tau, &spec)?;
    Ok(p1)
}

/// Call Gamma by Richardson-extrapolated central differences of the
/// semi-analytic price in spot, with relative step `1e-3`.
pub fn gamma_oracle(
    p: &HestonParams,
    x: f64,
    nu0: f64,
    tau: f64,
    strike: f64,
) -> Result<f64, OracleError> {
    validate_query(p, nu0, tau)?;
    if tau <= 0.0 {
        return Err(OracleError::InvalidInput(
            "gamma requires tau > 0".into(),
        ));
    }
    // the second difference tolerates the default quadrature tolerance:
    // the characteristic-function evaluation noise is identical across the
    // three spot shifts and largely cancels
    let spec = QuadratureSpec::default();
    let s0 = strike * x.exp();
    let second_diff = |h: f64| -> Result<f64, OracleError> {
        let up = price_call_with(p, ((s0 + h) / strike).ln(), nu0, tau, strike, &spec)?;
        let mid = price_call_with(p, x, nu0, tau, strike, &spec)?;
        let dn = price_call_with(p, ((s0 - h) / strike).ln(), nu0, tau, strike, &spec)?;
        Ok((up - 2.0 * mid + dn) / (h * h))
    };
    let h = 1e-3 * s0;
    let g_h = second_diff(h)?;
    let g_half = second_diff(0.5 * h)?;
    Ok((4.0 * g_half - g_h) / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainBounds;
    use crate::sampling::Sampler;

    fn bs_limit_params() -> HestonParams {
        HestonParams::new(3.0, 0.04, 1e-4, -0.5, 0.02)
    }

    fn typical() -> HestonParams {
        HestonParams::new(2.0, 0.09, 0.3, -0.7, 0.03)
    }

    #[test]
    fn bs_degenerate_limit() {
        // vanishing vol-of-vol with nu0 = theta freezes variance at theta
        let price = price_call(&bs_limit_params(), 0.0, 0.04, 1.0, 1.0).unwrap();
        let bs = bs_price(1.0, 1.0, 0.02, 0.2, 1.0);
        assert!((price - bs).abs() < 1e-5, "heston {price} vs bs {bs}");
        assert!((price - 0.089_160_4).abs() < 1e-5);
    }

    #[test]
    fn terminal_price_is_intrinsic() {
        let p = typical();
        for x in [-1.0, 0.0, 0.4] {
            assert_eq!(price_call(&p, x, 0.04, 0.0, 2.5).unwrap(), 2.5 * payoff(x));
        }
    }

    #[test]
    fn no_arbitrage_bounds_at_edges() {
        let p = typical();
        let k = 1.0;
        for tau in [0.1, 1.0] {
            let v = price_call(&p, 2.0, 0.2, tau, k).unwrap();
            let lo = k * (2.0f64.exp() - (-p.r * tau).exp());
            let hi = k * 2.0f64.exp();
            assert!(v >= lo - 1e-8 && v <= hi + 1e-8, "tau {tau}: {v}");
        }
        let deep_otm = price_call(&p, -2.0, 0.04, 0.25, 1.0).unwrap();
        assert!((0.0..1e-2).contains(&deep_otm));
    }

    #[test]
    fn put_call_parity() {
        let p = typical();
        for (x, nu0, tau) in [(0.0, 0.04, 1.0), (0.3, 0.2, 0.5), (-0.7, 0.09, 0.25)] {
            let k = 1.0;
            let c = price_call(&p, x, nu0, tau, k).unwrap();
            let put = price_put(&p, x, nu0, tau, k).unwrap();
            let s = k * x.exp();
            let forward = s - k * (-p.r * tau).exp();
            assert!(
                (c - put - forward).abs() < 1e-8,
                "parity violation at x={x}, tau={tau}: {}",
                c - put - forward
            );
        }
    }

    #[test]
    fn monotone_in_x_and_tau() {
        let p = typical();
        let mut prev = 0.0;
        for i in 0..=20 {
            let x = -2.0 + 4.0 * i as f64 / 20.0;
            let v = price_call(&p, x, 0.09, 0.5, 1.0).unwrap();
            assert!(v >= prev - 1e-8, "x sweep broke at {x}");
            prev = v;
        }
        prev = 0.0;
        for i in 1..=10 {
            let tau = i as f64 / 10.0;
            let v = price_call(&p, 0.1, 0.09, tau, 1.0).unwrap();
            assert!(v >= prev - 1e-8, "tau sweep broke at {tau}");
            prev = v;
        }
    }

    #[test]
    fn short_maturity_low_variance_tail_is_handled() {
        // the slow-decay corner that a fixed truncation at 200 misses
        let p = HestonParams::new(3.0, 0.17, 1.0, -0.95, 0.01);
        let c = price_call(&p, 0.0, 0.01, 0.02, 1.0).unwrap();
        let put = price_put(&p, 0.0, 0.01, 0.02, 1.0).unwrap();
        let forward = 1.0 - (-p.r * 0.02f64).exp();
        assert!(
            (c - put - forward).abs() < 1e-8,
            "parity at the tail corner: {}",
            c - put - forward
        );
        // sane magnitude: a 2%-of-a-year ATM option on ~10% vol
        assert!(c > 1e-4 && c < 0.02, "price {c}");
    }

    #[test]
    fn delta_examples() {
        let p = typical();
        assert!((delta_oracle(&p, 2.0, 0.09, 0.5).unwrap() - 1.0).abs() < 1e-2);
        assert!(delta_oracle(&p, -2.0, 0.09, 0.5).unwrap() < 1e-2);
        // at sigma = 1e-4 the genuine O(sigma) skew correction to Delta is
        // ~1e-5, so the check sits just above it
        let d = delta_oracle(&bs_limit_params(), 0.0, 0.04, 1.0).unwrap();
        assert!((d - 0.579_260).abs() < 5e-5, "delta {d}");
        for (x, tau) in [(0.5, 0.3), (-0.3, 0.8)] {
            let d = delta_oracle(&p, x, 0.09, tau).unwrap();
            assert!((0.0..=1.0).contains(&d));
        }
    }

    #[test]
    fn gamma_examples() {
        let g = gamma_oracle(&bs_limit_params(), 0.0, 0.04, 1.0, 1.0).unwrap();
        assert!((g - 1.955_213).abs() < 1e-3, "gamma {g}");
        let deep = gamma_oracle(&typical(), 2.0, 0.09, 0.5, 1.0).unwrap();
        assert!(deep.abs() < 1e-2);
        assert!(gamma_oracle(&typical(), 0.0, 0.09, 0.0, 1.0).is_err());
    }

    #[test]
    fn gamma_integrates_to_delta_span() {
        let p = typical();
        let (nu0, tau, k) = (0.09, 0.5, 1.0);
        let n = 120;
        let s_lo = (-2.0f64).exp();
        let s_hi = 2.0f64.exp();
        let mut acc = 0.0;
        let mut prev_g: Option<f64> = None;
        for i in 0..=n {
            let s = s_lo + (s_hi - s_lo) * i as f64 / n as f64;
            let g = gamma_oracle(&p, (s / k).ln(), nu0, tau, k).unwrap();
            if let Some(pg) = prev_g {
                acc += 0.5 * (pg + g) * (s_hi - s_lo) / n as f64;
            }
            prev_g = Some(g);
        }
        let dspan = delta_oracle(&p, 2.0, nu0, tau).unwrap()
            - delta_oracle(&p, -2.0, nu0, tau).unwrap();
        assert!((acc - dspan).abs() < 2e-2, "integral {acc} vs span {dspan}");
    }

    #[test]
    fn mc_cross_check_on_random_feller_draws() {
        let mut sampler = Sampler::new(DomainBounds::default(), 2.0, 99).unwrap();
        let pts = sampler.sample_interior(5).unwrap();
        for (i, cp) in pts.iter().enumerate() {
            let tau = cp.point.tau.max(0.05);
            let spec = McSpec {
                paths: 50_000,
                steps_per_year: 252,
                scheme: McScheme::FullTruncationEuler,
                seed: 1000 + i as u64,
            };
            let analytic = price_call(&cp.params, cp.point.x, cp.point.nu, tau, 1.0).unwrap();
            let mc = price_call_mc(&cp.params, cp.point.x, cp.point.nu, tau, 1.0, &spec).unwrap();
            let tol = 3.0 * mc.std_err + 2e-3; // stderr plus discretization slack
            assert!(
                (analytic - mc.mean).abs() <= tol,
                "draw {i}: analytic {analytic} vs mc {} +- {}",
                mc.mean,
                mc.std_err
            );
        }
    }

    #[test]
    fn spec_validation() {
        let bad = QuadratureSpec {
            nodes: 32,
            ..QuadratureSpec::default()
        };
        assert!(bad.validate().is_err());
        let bad = QuadratureSpec {
            upper_limit: 0.0,
            ..QuadratureSpec::default()
        };
        assert!(bad.validate().is_err());
    }
}
