//! Monte Carlo cross-check pricer. Paths use per-path counter-based random
//! streams (one ChaCha stream per path index), so estimates are identical
//! for a fixed seed regardless of how paths are partitioned across threads.

use super::OracleError;
use crate::domain::{payoff, HestonParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum McScheme {
    /// Euler on log-spot with full truncation of the variance drift and
    /// diffusion (the default).
    FullTruncationEuler,
    /// Andersen's quadratic-exponential variance step with central
    /// discretization of the log-spot drift.
    QuadraticExponential,
}

#[derive(Clone, Copy, Debug)]
pub struct McSpec {
    pub paths: usize,
    pub steps_per_year: usize,
    pub scheme: McScheme,
    pub seed: u64,
}

impl Default for McSpec {
    fn default() -> Self {
        Self {
            paths: 100_000,
            steps_per_year: 252,
            scheme: McScheme::FullTruncationEuler,
            seed: 0,
        }
    }
}

impl McSpec {
    pub fn validate(&self) -> Result<(), OracleError> {
        if self.paths == 0 {
            return Err(OracleError::InvalidInput("path count must be >= 1".into()));
        }
        if self.steps_per_year == 0 {
            return Err(OracleError::InvalidInput(
                "steps per year must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
}

/// Simulates one path of terminal log-moneyness starting from `x`.
fn terminal_x(
    p: &HestonParams,
    x0: f64,
    nu0: f64,
    dt: f64,
    steps: usize,
    scheme: McScheme,
    rng: &mut ChaCha12Rng,
) -> f64 {
    let mut x = x0;
    let mut nu = nu0;
    let sqrt_dt = dt.sqrt();
    let rho_bar = (1.0 - p.rho * p.rho).sqrt();
    match scheme {
        McScheme::FullTruncationEuler => {
            for _ in 0..steps {
                let z1: f64 = rng.sample(StandardNormal);
                let z2: f64 = rng.sample(StandardNormal);
                let nu_plus = nu.max(0.0);
                let vol = nu_plus.sqrt();
                x += (p.r - 0.5 * nu_plus) * dt + vol * sqrt_dt * z1;
                nu += p.kappa * (p.theta - nu_plus) * dt
                    + p.sigma * vol * sqrt_dt * (p.rho * z1 + rho_bar * z2);
            }
        }
        McScheme::QuadraticExponential => {
            const PSI_C: f64 = 1.5;
            let (g1, g2) = (0.5, 0.5);
            let emk = (-p.kappa * dt).exp();
            let k0_coef = -p.rho * p.kappa * p.theta / p.sigma * dt;
            let k1 = g1 * dt * (p.kappa * p.rho / p.sigma - 0.5) - p.rho / p.sigma;
            let k2 = g2 * dt * (p.kappa * p.rho / p.sigma - 0.5) + p.rho / p.sigma;
            let k3 = g1 * dt * (1.0 - p.rho * p.rho);
            let k4 = g2 * dt * (1.0 - p.rho * p.rho);
            for _ in 0..steps {
                let z1: f64 = rng.sample(StandardNormal);
                let zv: f64 = rng.sample(StandardNormal);
                let uv: f64 = rng.gen::<f64>();
                let m = p.theta + (nu - p.theta) * emk;
                let s2 = nu * p.sigma * p.sigma * emk * (1.0 - emk) / p.kappa
                    + p.theta * p.sigma * p.sigma * (1.0 - emk) * (1.0 - emk)
                        / (2.0 * p.kappa);
                let psi = s2 / (m * m).max(1e-300);
                let nu_next = if psi <= PSI_C {
                    let two_over = 2.0 / psi;
                    let b2 = two_over - 1.0 + (two_over * (two_over - 1.0)).max(0.0).sqrt();
                    let a = m / (1.0 + b2);
                    let b = b2.max(0.0).sqrt();
                    a * (b + zv) * (b + zv)
                } else {
                    let pmass = (psi - 1.0) / (psi + 1.0);
                    let beta = (1.0 - pmass) / m.max(1e-300);
                    if uv <= pmass {
                        0.0
                    } else {
                        ((1.0 - pmass) / (1.0 - uv)).ln() / beta
                    }
                };
                x += p.r * dt + k0_coef + k1 * nu + k2 * nu_next
                    + (k3 * nu + k4 * nu_next).max(0.0).sqrt() * z1;
                nu = nu_next;
            }
        }
    }
    x
}

/// Discounted-payoff Monte Carlo price of the call, with its standard
/// error. At `tau = 0` there is no diffusion and the estimate is exact.
pub fn price_call_mc(
    p: &HestonParams,
    x: f64,
    nu0: f64,
    tau: f64,
    strike: f64,
    spec: &McSpec,
) -> Result<McEstimate, OracleError> {
    spec.validate()?;
    if !p.feller_holds() {
        return Err(OracleError::FellerViolated(*p));
    }
    if tau < 0.0 {
        return Err(OracleError::InvalidInput(format!(
            "tau = {tau} must be nonnegative"
        )));
    }
    if tau == 0.0 {
        return Ok(McEstimate {
            mean: strike * payoff(x),
            std_err: 0.0,
        });
    }
    let steps = ((tau * spec.steps_per_year as f64).ceil() as usize).max(1);
    let dt = tau / steps as f64;
    let discount = (-p.r * tau).exp();

    // per-path streams keep the estimate independent of thread count
    let chunk = 4096usize;
    let n = spec.paths;
    let partials: Vec<(f64, f64)> = (0..n.div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let lo = c * chunk;
            let hi = (lo + chunk).min(n);
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for path in lo..hi {
                let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
                rng.set_stream(path as u64 + 1);
                let xt = terminal_x(p, x, nu0, dt, steps, spec.scheme, &mut rng);
                let v = discount * strike * payoff(xt);
                sum += v;
                sum_sq += v * v;
            }
            (sum, sum_sq)
        })
        .collect();
    let (sum, sum_sq) = partials
        .iter()
        .fold((0.0, 0.0), |(a, b), (s, q)| (a + s, b + q));
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sum_sq - sum * sum / nf) / (nf - 1.0).max(1.0)).max(0.0);
    Ok(McEstimate {
        mean,
        std_err: (var / nf).sqrt(),
    })
}
