//! Collocation, ATM and boundary point generation from a scrambled Sobol
//! sequence, the tanh warp on the log-moneyness axis, Feller-constrained
//! rejection resampling, and residual-based adaptive replacement.

mod sobol;

pub use sobol::{SobolEngine, DIRECTION_TABLE_ID, MAX_DIMENSION};

use crate::domain::{
    boundary_lower, boundary_upper, DomainBounds, DomainPoint, HestonParams,
};
use rand::seq::index::sample as sample_indices;
use rand_chacha::ChaCha12Rng;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

/// Warp strength used in all experiments.
pub const DEFAULT_ALPHA_X: f64 = 2.0;

#[derive(Error, Debug)]
pub enum SamplingError {
    #[error("sobol dimension {dim} unsupported (1..={max})")]
    InvalidDimension { dim: usize, max: usize },
    #[error("sobol index would overflow 32 bits")]
    IndexOverflow,
    #[error("boundary point count {0} must be even")]
    OddBoundaryCount(usize),
    #[error("size mismatch: {what}")]
    SizeMismatch { what: String },
    #[error(
        "rejection rate {rejected}/{drawn} exceeds 90% over the sampling window; \
         parameter ranges are likely inconsistent with the Feller constraint"
    )]
    ExcessiveRejection { rejected: usize, drawn: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A joint draw: model parameters plus a query coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollocationPoint {
    pub params: HestonParams,
    pub point: DomainPoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundarySide {
    Lower,
    Upper,
}

/// A boundary-condition point with its side tag and precomputed target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryPoint {
    pub colloc: CollocationPoint,
    pub side: BoundarySide,
    pub target: f64,
}

/// The three point sets driving the loss. The interior set has a fixed
/// size that adaptive replacement preserves; ATM and boundary sets stay
/// untouched during stage 1.
#[derive(Clone, Debug, Default)]
pub struct CollocationSet {
    pub interior: Vec<CollocationPoint>,
    pub atm: Vec<CollocationPoint>,
    pub boundary: Vec<BoundaryPoint>,
}

/// Maps a uniform coordinate through the tanh warp:
/// `x = x_mid + x_half * tanh(alpha * (2u - 1))`.
///
/// Strictly increasing in `u`; the image is the open interval
/// `(x_mid - x_half tanh(alpha), x_mid + x_half tanh(alpha))`. Note the
/// pushforward of a uniform draw piles mass near the interval ends, where
/// tanh flattens.
pub fn warp_x(u_x: f64, bounds: &DomainBounds, alpha_x: f64) -> f64 {
    let (x_min, x_max) = bounds.x;
    let x_mid = 0.5 * (x_min + x_max);
    let x_half = 0.5 * (x_max - x_min);
    x_mid + x_half * (alpha_x * (2.0 * u_x - 1.0)).tanh()
}

/// Inverse of [`warp_x`] on its image.
pub fn warp_x_inverse(x: f64, bounds: &DomainBounds, alpha_x: f64) -> f64 {
    let (x_min, x_max) = bounds.x;
    let x_mid = 0.5 * (x_min + x_max);
    let x_half = 0.5 * (x_max - x_min);
    (((x - x_mid) / x_half).atanh() / alpha_x + 1.0) / 2.0
}

fn affine(u: f64, (min, max): (f64, f64)) -> f64 {
    min + u * (max - min)
}

/// Generates all point sets from one Sobol stream. Generation is
/// sequential (the Sobol index is stateful); consumers may partition the
/// returned sets across threads freely.
#[derive(Clone, Debug)]
pub struct Sampler {
    engine: SobolEngine,
    bounds: DomainBounds,
    alpha_x: f64,
}

impl Sampler {
    pub fn new(bounds: DomainBounds, alpha_x: f64, seed: u64) -> Result<Self, SamplingError> {
        Ok(Self {
            engine: SobolEngine::new(8, seed)?,
            bounds,
            alpha_x,
        })
    }

    pub fn bounds(&self) -> &DomainBounds {
        &self.bounds
    }

    /// Draws one Feller-valid joint point; `x` comes from `map_x`.
    fn draw_valid(
        &mut self,
        map_x: impl Fn(f64, &DomainBounds, f64) -> f64,
        rejected: &mut usize,
        drawn: &mut usize,
    ) -> Result<CollocationPoint, SamplingError> {
        let mut coords = [0.0; 8];
        loop {
            self.engine.next_into(&mut coords)?;
            *drawn += 1;
            let params = HestonParams::new(
                affine(coords[0], self.bounds.kappa),
                affine(coords[1], self.bounds.theta),
                affine(coords[2], self.bounds.sigma),
                affine(coords[3], self.bounds.rho),
                affine(coords[4], self.bounds.r),
            );
            if !params.feller_holds() {
                *rejected += 1;
                // a broken configuration rejects essentially everything
                if *drawn >= 1000 && *rejected * 10 > *drawn * 9 {
                    return Err(SamplingError::ExcessiveRejection {
                        rejected: *rejected,
                        drawn: *drawn,
                    });
                }
                continue;
            }
            let point = DomainPoint::new(
                map_x(coords[5], &self.bounds, self.alpha_x),
                affine(coords[6], self.bounds.nu),
                affine(coords[7], self.bounds.tau),
            );
            return Ok(CollocationPoint { params, point });
        }
    }

    /// `n` interior points: warped `x`, affine everything else,
    /// Feller-violating draws rejected and redrawn.
    pub fn sample_interior(&mut self, n: usize) -> Result<Vec<CollocationPoint>, SamplingError> {
        let (mut rejected, mut drawn) = (0, 0);
        (0..n)
            .map(|_| self.draw_valid(warp_x, &mut rejected, &mut drawn))
            .collect()
    }

    /// `n` points with `x` uniform (not warped) on the ATM band
    /// `[-0.05, 0.05]`; other coordinates as interior.
    pub fn sample_atm(&mut self, n: usize) -> Result<Vec<CollocationPoint>, SamplingError> {
        let (mut rejected, mut drawn) = (0, 0);
        (0..n)
            .map(|_| self.draw_valid(|u, _, _| affine(u, (-0.05, 0.05)), &mut rejected, &mut drawn))
            .collect()
    }

    /// `n` boundary points, alternating sides so each side gets exactly
    /// `n/2`. Targets are the side conditions evaluated at the point's own
    /// `(r, tau)`.
    pub fn sample_boundary(&mut self, n: usize) -> Result<Vec<BoundaryPoint>, SamplingError> {
        if n % 2 != 0 {
            return Err(SamplingError::OddBoundaryCount(n));
        }
        let (mut rejected, mut drawn) = (0, 0);
        (0..n)
            .map(|i| {
                let side = if i % 2 == 0 {
                    BoundarySide::Lower
                } else {
                    BoundarySide::Upper
                };
                let mut cp = self.draw_valid(warp_x, &mut rejected, &mut drawn)?;
                let (x_min, x_max) = self.bounds.x;
                let (x, target) = match side {
                    BoundarySide::Lower => (x_min, boundary_lower()),
                    BoundarySide::Upper => (
                        x_max,
                        boundary_upper(x_max, cp.params.r, cp.point.tau),
                    ),
                };
                cp.point.x = x;
                Ok(BoundaryPoint {
                    colloc: cp,
                    side,
                    target,
                })
            })
            .collect()
    }
}

/// Replaces `k` uniformly-random distinct interior points with the `k`
/// candidates of largest absolute residual (ties broken by candidate
/// index). Returns the selected candidate indices in replacement order.
pub fn rar_replace(
    set: &mut CollocationSet,
    candidates: &[CollocationPoint],
    residuals: &[f64],
    k: usize,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<usize>, SamplingError> {
    if candidates.len() != residuals.len() {
        return Err(SamplingError::SizeMismatch {
            what: format!(
                "{} candidates vs {} residuals",
                candidates.len(),
                residuals.len()
            ),
        });
    }
    if k > candidates.len() || k > set.interior.len() {
        return Err(SamplingError::SizeMismatch {
            what: format!(
                "k = {k} exceeds candidates {} or interior {}",
                candidates.len(),
                set.interior.len()
            ),
        });
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        residuals[b]
            .abs()
            .total_cmp(&residuals[a].abs())
            .then(a.cmp(&b))
    });
    order.truncate(k);
    let victims = sample_indices(rng, set.interior.len(), k);
    for (victim, &cand) in victims.iter().zip(order.iter()) {
        set.interior[victim] = candidates[cand];
    }
    Ok(order)
}

pub const POINTS_CSV_HEADER: &str = "kappa,theta,sigma,rho,r,x,nu,tau";

pub fn points_to_csv<'a>(points: impl IntoIterator<Item = &'a CollocationPoint>) -> String {
    let mut out = String::from(POINTS_CSV_HEADER);
    out.push('\n');
    for cp in points {
        let p = cp.params;
        let d = cp.point;
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            p.kappa, p.theta, p.sigma, p.rho, p.r, d.x, d.nu, d.tau
        ));
    }
    out
}

pub fn write_points_csv<'a>(
    path: &Path,
    points: impl IntoIterator<Item = &'a CollocationPoint>,
) -> Result<(), SamplingError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(points_to_csv(points).as_bytes())?;
    Ok(())
}
