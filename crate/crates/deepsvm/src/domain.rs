//! Core domain types shared by every other module: Heston model parameters,
//! domain coordinates and bounds, the call payoff and spatial boundary
//! targets, and the affine rescaling of raw inputs onto `[-1, 1]`.
//!
//! Prices are handled internally in strike-normalized units `u = V / K`;
//! the strike only enters when denormalizing a price or Gamma for output.

use thiserror::Error;

/// One of the eight joint input axes, in branch-then-trunk order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Kappa,
    Theta,
    Sigma,
    Rho,
    Rate,
    X,
    Nu,
    Tau,
}

/// All axes in the canonical order used for normalized 8-vectors and the
/// collocation CSV export: `kappa,theta,sigma,rho,r,x,nu,tau`.
pub const AXES: [Axis; 8] = [
    Axis::Kappa,
    Axis::Theta,
    Axis::Sigma,
    Axis::Rho,
    Axis::Rate,
    Axis::X,
    Axis::Nu,
    Axis::Tau,
];

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Kappa => "kappa",
            Axis::Theta => "theta",
            Axis::Sigma => "sigma",
            Axis::Rho => "rho",
            Axis::Rate => "r",
            Axis::X => "x",
            Axis::Nu => "nu",
            Axis::Tau => "tau",
        }
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum DomainError {
    #[error("{axis} = {value} outside [{min}, {max}]")]
    OutOfBounds {
        axis: Axis,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("{axis} = {value} is not finite")]
    NonFinite { axis: Axis, value: f64 },
    #[error("Feller condition violated: 2*kappa*theta = {lhs} <= sigma^2 = {rhs}")]
    FellerViolated { lhs: f64, rhs: f64 },
    #[error("invalid bounds on {axis}: min {min} >= max {max}")]
    InvalidBounds { axis: Axis, min: f64, max: f64 },
}

/// Heston model parameters: the 5-vector fed to the branch network.
///
/// `kappa` is the mean-reversion speed (1/year), `theta` the long-run
/// variance, `sigma` the volatility of variance (1/sqrt(year)), `rho` the
/// spot/variance correlation and `r` the risk-free rate (1/year).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HestonParams {
    pub kappa: f64,
    pub theta: f64,
    pub sigma: f64,
    pub rho: f64,
    pub r: f64,
}

impl HestonParams {
    pub fn new(kappa: f64, theta: f64, sigma: f64, rho: f64, r: f64) -> Self {
        Self {
            kappa,
            theta,
            sigma,
            rho,
            r,
        }
    }

    /// True iff `2*kappa*theta > sigma^2` holds strictly. Equality is
    /// rejected: it admits the degenerate boundary case at `nu -> 0`.
    pub fn feller_holds(&self) -> bool {
        2.0 * self.kappa * self.theta > self.sigma * self.sigma
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.kappa, self.theta, self.sigma, self.rho, self.r]
    }
}

/// A query coordinate: log-moneyness, instantaneous variance and
/// time-to-maturity. Fed to the trunk network.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DomainPoint {
    pub x: f64,
    pub nu: f64,
    pub tau: f64,
}

impl DomainPoint {
    pub fn new(x: f64, nu: f64, tau: f64) -> Self {
        Self { x, nu, tau }
    }
}

/// Axis-aligned box for the joint `(mu, x, nu, tau)` space. Defaults are
/// the training ranges; the trained operator is only queried inside them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DomainBounds {
    pub kappa: (f64, f64),
    pub theta: (f64, f64),
    pub sigma: (f64, f64),
    pub rho: (f64, f64),
    pub r: (f64, f64),
    pub x: (f64, f64),
    pub nu: (f64, f64),
    pub tau: (f64, f64),
}

impl Default for DomainBounds {
    fn default() -> Self {
        Self {
            kappa: (0.5, 3.0),
            theta: (0.01, 0.20),
            sigma: (0.1, 1.0),
            rho: (-0.95, -0.05),
            r: (0.00, 0.08),
            x: (-2.0, 2.0),
            nu: (0.01, 0.40),
            tau: (0.0, 1.0),
        }
    }
}

impl DomainBounds {
    pub fn range(&self, axis: Axis) -> (f64, f64) {
        match axis {
            Axis::Kappa => self.kappa,
            Axis::Theta => self.theta,
            Axis::Sigma => self.sigma,
            Axis::Rho => self.rho,
            Axis::Rate => self.r,
            Axis::X => self.x,
            Axis::Nu => self.nu,
            Axis::Tau => self.tau,
        }
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        for axis in AXES {
            let (min, max) = self.range(axis);
            if !(min.is_finite() && max.is_finite()) {
                return Err(DomainError::NonFinite {
                    axis,
                    value: if min.is_finite() { max } else { min },
                });
            }
            if min >= max {
                return Err(DomainError::InvalidBounds { axis, min, max });
            }
        }
        Ok(())
    }

    /// Checks one value against one axis range (inclusive endpoints).
    pub fn check(&self, axis: Axis, value: f64) -> Result<(), DomainError> {
        if !value.is_finite() {
            return Err(DomainError::NonFinite { axis, value });
        }
        let (min, max) = self.range(axis);
        if value < min || value > max {
            return Err(DomainError::OutOfBounds {
                axis,
                value,
                min,
                max,
            });
        }
        Ok(())
    }

    pub fn check_params(&self, p: &HestonParams) -> Result<(), DomainError> {
        for (axis, v) in AXES[..5].iter().zip(p.as_array()) {
            self.check(*axis, v)?;
        }
        if !p.feller_holds() {
            return Err(DomainError::FellerViolated {
                lhs: 2.0 * p.kappa * p.theta,
                rhs: p.sigma * p.sigma,
            });
        }
        Ok(())
    }

    pub fn check_point(&self, d: &DomainPoint) -> Result<(), DomainError> {
        self.check(Axis::X, d.x)?;
        self.check(Axis::Nu, d.nu)?;
        self.check(Axis::Tau, d.tau)
    }
}

/// Strike-normalized call payoff `phi(x) = max(e^x - 1, 0)`.
pub fn payoff(x: f64) -> f64 {
    (x.exp() - 1.0).max(0.0)
}

/// Subgradient of the payoff. The kink at `x = 0` takes the midpoint value
/// 0.5; the distributional delta in the second derivative is dropped.
pub fn payoff_dx(x: f64) -> f64 {
    if x > 0.0 {
        x.exp()
    } else if x == 0.0 {
        0.5
    } else {
        0.0
    }
}

pub fn payoff_dxx(x: f64) -> f64 {
    if x > 0.0 {
        x.exp()
    } else {
        0.0
    }
}

/// Target imposed at the upper spatial boundary: `e^{x_max} - e^{-r tau}`.
pub fn boundary_upper(x_max: f64, r: f64, tau: f64) -> f64 {
    x_max.exp() - (-r * tau).exp()
}

/// Target imposed at the lower spatial boundary.
pub fn boundary_lower() -> f64 {
    0.0
}

fn normalize_axis(v: f64, (min, max): (f64, f64)) -> f64 {
    2.0 * (v - min) / (max - min) - 1.0
}

fn denormalize_axis(t: f64, (min, max): (f64, f64)) -> f64 {
    min + 0.5 * (t + 1.0) * (max - min)
}

/// Affinely rescales the joint input onto `[-1, 1]^8` in the canonical
/// axis order. Inputs outside `bounds` are rejected, naming the axis.
pub fn normalize_inputs(
    p: &HestonParams,
    d: &DomainPoint,
    bounds: &DomainBounds,
) -> Result<[f64; 8], DomainError> {
    let raw = [p.kappa, p.theta, p.sigma, p.rho, p.r, d.x, d.nu, d.tau];
    let mut out = [0.0; 8];
    for (i, (axis, v)) in AXES.iter().zip(raw).enumerate() {
        bounds.check(*axis, v)?;
        out[i] = normalize_axis(v, bounds.range(*axis));
    }
    Ok(out)
}

/// Inverse of [`normalize_inputs`].
pub fn denormalize_inputs(t: &[f64; 8], bounds: &DomainBounds) -> (HestonParams, DomainPoint) {
    let mut raw = [0.0; 8];
    for (i, axis) in AXES.iter().enumerate() {
        raw[i] = denormalize_axis(t[i], bounds.range(*axis));
    }
    (
        HestonParams::new(raw[0], raw[1], raw[2], raw[3], raw[4]),
        DomainPoint::new(raw[5], raw[6], raw[7]),
    )
}

/// Per-axis slope of the normalization map, `2 / (max - min)`. The jet
/// propagation uses these to express derivatives in physical units.
pub fn normalization_scales(bounds: &DomainBounds) -> [f64; 8] {
    let mut s = [0.0; 8];
    for (i, axis) in AXES.iter().enumerate() {
        let (min, max) = bounds.range(*axis);
        s[i] = 2.0 / (max - min);
    }
    s
}
