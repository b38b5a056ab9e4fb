//! The pricing operator in log-moneyness coordinates, the PDE residual,
//! and the loss components combined as
//! `L = L_phys + lambda_b * L_bound + lambda_a * L_atm`.

use crate::autodiff::{Jet2, PriceSurface};
use crate::domain::{DomainError, DomainPoint, HestonParams};
use crate::sampling::{BoundaryPoint, CollocationPoint};
use rayon::prelude::*;
use thiserror::Error;

pub const ATM_BAND: f64 = 0.05;

#[derive(Error, Debug)]
pub enum PhysicsError {
    #[error("empty input")]
    EmptyInput,
    #[error("point {index} has x = {x}, outside the ATM band |x| <= {ATM_BAND}")]
    OutsideAtmBand { index: usize, x: f64 },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Weights of the total loss. `lambda_max` scales the fourth-power residual
/// emphasis inside the physics and ATM terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_b: f64,
    pub lambda_a: f64,
    pub lambda_max: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_b: 1.0,
            lambda_a: 1.0,
            lambda_max: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossReport {
    pub l_phys: f64,
    pub l_bound: f64,
    pub l_atm: f64,
    pub lambda_b: f64,
    pub lambda_a: f64,
    pub total: f64,
}

impl LossReport {
    pub fn compose(l_phys: f64, l_bound: f64, l_atm: f64, w: &LossWeights) -> Self {
        Self {
            l_phys,
            l_bound,
            l_atm,
            lambda_b: w.lambda_b,
            lambda_a: w.lambda_a,
            total: l_phys + w.lambda_b * l_bound + w.lambda_a * l_atm,
        }
    }
}

/// The spatial operator `N[u]`:
/// `(r - nu/2) u_x + rho sigma nu u_xnu + (sigma^2 nu / 2) u_nunu
///  + (nu/2) u_xx + kappa (theta - nu) u_nu - r u`.
pub fn heston_operator(p: &HestonParams, d: &DomainPoint, j: &Jet2) -> f64 {
    (p.r - 0.5 * d.nu) * j.du_dx
        + p.rho * p.sigma * d.nu * j.d2u_dxdnu
        + 0.5 * p.sigma * p.sigma * d.nu * j.d2u_dnu2
        + 0.5 * d.nu * j.d2u_dx2
        + p.kappa * (p.theta - d.nu) * j.du_dnu
        - p.r * j.u
}

/// PDE residual `R = u_tau - N[u]`.
pub fn residual(p: &HestonParams, d: &DomainPoint, j: &Jet2) -> f64 {
    j.du_dtau - heston_operator(p, d, j)
}

/// Gradient of the residual with respect to the seven jet fields; constant
/// per point since the operator is linear in the jet.
pub fn residual_gradient(p: &HestonParams, d: &DomainPoint) -> Jet2 {
    Jet2 {
        u: p.r,
        du_dx: -(p.r - 0.5 * d.nu),
        du_dnu: -p.kappa * (p.theta - d.nu),
        du_dtau: 1.0,
        d2u_dx2: -0.5 * d.nu,
        d2u_dnu2: -0.5 * p.sigma * p.sigma * d.nu,
        d2u_dxdnu: -p.rho * p.sigma * d.nu,
    }
}

/// Residual emphasis loss `mean(R^2) + lambda_max * mean(R^4)`.
pub fn loss_phys(residuals: &[f64], lambda_max: f64) -> Result<f64, PhysicsError> {
    if residuals.is_empty() {
        return Err(PhysicsError::EmptyInput);
    }
    let n = residuals.len() as f64;
    let mut sum2 = 0.0;
    let mut sum4 = 0.0;
    for r in residuals {
        let r2 = r * r;
        sum2 += r2;
        sum4 += r2 * r2;
    }
    Ok(sum2 / n + lambda_max * sum4 / n)
}

/// Residuals of a surface over a point set, parallel over fixed chunks and
/// combined in chunk order.
pub fn residuals_of(
    surface: &dyn PriceSurface,
    points: &[CollocationPoint],
    chunk: usize,
) -> Result<Vec<f64>, PhysicsError> {
    let chunk = chunk.max(1);
    let parts: Vec<Result<Vec<f64>, DomainError>> = points
        .par_chunks(chunk)
        .map(|slice| {
            slice
                .iter()
                .map(|cp| Ok(residual(&cp.params, &cp.point, &surface.jet(&cp.params, &cp.point)?)))
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(points.len());
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}

/// Pooled mean squared error of the surface against the stored boundary
/// targets (upper: `e^{x_max} - e^{-r tau}`, lower: 0), both sides in one
/// mean.
pub fn loss_bound(
    surface: &dyn PriceSurface,
    boundary: &[BoundaryPoint],
) -> Result<f64, PhysicsError> {
    if boundary.is_empty() {
        return Err(PhysicsError::EmptyInput);
    }
    let mut acc = 0.0;
    for bp in boundary {
        let u = surface.value(&bp.colloc.params, &bp.colloc.point)?;
        let err = u - bp.target;
        acc += err * err;
    }
    Ok(acc / boundary.len() as f64)
}

/// The physics loss restricted to the dedicated ATM set. Points outside
/// the band are an error.
pub fn loss_atm(
    surface: &dyn PriceSurface,
    atm: &[CollocationPoint],
    lambda_max: f64,
) -> Result<f64, PhysicsError> {
    if atm.is_empty() {
        return Err(PhysicsError::EmptyInput);
    }
    for (index, cp) in atm.iter().enumerate() {
        if cp.point.x.abs() > ATM_BAND + 1e-12 {
            return Err(PhysicsError::OutsideAtmBand {
                index,
                x: cp.point.x,
            });
        }
    }
    let residuals = residuals_of(surface, atm, atm.len())?;
    loss_phys(&residuals, lambda_max)
}

/// Forward-only evaluation of the full loss report over a batch, chunked
/// exactly like the gradient path so the two agree bit for bit.
pub fn total_loss(
    surface: &dyn PriceSurface,
    batch: &crate::autodiff::TrainBatch,
    weights: &LossWeights,
    chunk: usize,
) -> Result<LossReport, crate::autodiff::AutodiffError> {
    let chunk = chunk.max(1);
    if batch.is_empty() {
        return Err(crate::autodiff::AutodiffError::EmptyBatch);
    }
    let phys_sum = |pts: &[CollocationPoint]| -> Result<f64, DomainError> {
        let parts: Vec<Result<f64, DomainError>> = pts
            .par_chunks(chunk)
            .map(|slice| {
                let mut acc = 0.0;
                for cp in slice {
                    let r = residual(&cp.params, &cp.point, &surface.jet(&cp.params, &cp.point)?);
                    acc += r * r + weights.lambda_max * r.powi(4);
                }
                Ok(acc)
            })
            .collect();
        let mut total = 0.0;
        for p in parts {
            total += p?;
        }
        Ok(total)
    };
    let bound_sum = |pts: &[BoundaryPoint]| -> Result<f64, DomainError> {
        let parts: Vec<Result<f64, DomainError>> = pts
            .par_chunks(chunk)
            .map(|slice| {
                let mut acc = 0.0;
                for bp in slice {
                    let u = surface.value(&bp.colloc.params, &bp.colloc.point)?;
                    let err = u - bp.target;
                    acc += err * err;
                }
                Ok(acc)
            })
            .collect();
        let mut total = 0.0;
        for p in parts {
            total += p?;
        }
        Ok(total)
    };
    let l_phys = if batch.interior.is_empty() {
        0.0
    } else {
        phys_sum(batch.interior)? / batch.interior.len() as f64
    };
    let l_atm = if batch.atm.is_empty() {
        0.0
    } else {
        phys_sum(batch.atm)? / batch.atm.len() as f64
    };
    let l_bound = if batch.boundary.is_empty() {
        0.0
    } else {
        bound_sum(batch.boundary)? / batch.boundary.len() as f64
    };
    Ok(LossReport::compose(l_phys, l_bound, l_atm, weights))
}

/// The discounted forward `u*(x, tau) = e^x - e^{-r tau}`, an exact
/// solution of the pricing PDE. Injected in place of the network to
/// calibrate harnesses: its residual is identically zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct DiscountedForwardSolution;

impl PriceSurface for DiscountedForwardSolution {
    fn value(&self, p: &HestonParams, d: &DomainPoint) -> Result<f64, DomainError> {
        Ok(d.x.exp() - (-p.r * d.tau).exp())
    }

    fn jet(&self, p: &HestonParams, d: &DomainPoint) -> Result<Jet2, DomainError> {
        let ex = d.x.exp();
        Ok(Jet2 {
            u: ex - (-p.r * d.tau).exp(),
            du_dx: ex,
            du_dnu: 0.0,
            du_dtau: p.r * (-p.r * d.tau).exp(),
            d2u_dx2: ex,
            d2u_dnu2: 0.0,
            d2u_dxdnu: 0.0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::TrainBatch;
    use crate::domain::DomainBounds;
    use crate::network::{init_model, MlpSpec};
    use crate::sampling::Sampler;

    fn p() -> HestonParams {
        HestonParams::new(2.0, 0.09, 0.3, -0.7, 0.05)
    }

    #[test]
    fn constant_solution_residual_is_r_times_c() {
        let j = Jet2 {
            u: 1.0,
            ..Jet2::default()
        };
        let d = DomainPoint::new(0.3, 0.2, 0.5);
        assert!((heston_operator(&p(), &d, &j) + 0.05).abs() < 1e-15);
        assert!((residual(&p(), &d, &j) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn zero_jet_gives_zero_operator() {
        let d = DomainPoint::new(0.3, 0.2, 0.5);
        assert_eq!(heston_operator(&p(), &d, &Jet2::default()), 0.0);
    }

    #[test]
    fn discounted_forward_is_an_exact_solution() {
        let s = DiscountedForwardSolution;
        let mut sampler = Sampler::new(DomainBounds::default(), 2.0, 3).unwrap();
        for cp in sampler.sample_interior(500).unwrap() {
            let j = s.jet(&cp.params, &cp.point).unwrap();
            let r = residual(&cp.params, &cp.point, &j);
            assert!(r.abs() < 1e-12, "residual {r} at {:?}", cp.point);
        }
    }

    #[test]
    fn operator_is_linear_in_the_jet() {
        let d = DomainPoint::new(-0.4, 0.13, 0.8);
        let j1 = Jet2 {
            u: 0.3,
            du_dx: 1.1,
            du_dnu: -0.2,
            du_dtau: 0.7,
            d2u_dx2: 2.0,
            d2u_dnu2: -0.6,
            d2u_dxdnu: 0.15,
        };
        let j2 = Jet2 {
            u: -0.9,
            du_dx: 0.4,
            du_dnu: 0.8,
            du_dtau: -1.2,
            d2u_dx2: -0.3,
            d2u_dnu2: 1.7,
            d2u_dxdnu: -2.2,
        };
        let mut sum = j1;
        sum.axpy(1.0, &j2);
        let lhs = residual(&p(), &d, &sum);
        let rhs = residual(&p(), &d, &j1) + residual(&p(), &d, &j2);
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn residual_gradient_matches_componentwise_perturbation() {
        let d = DomainPoint::new(0.2, 0.31, 0.45);
        let g = residual_gradient(&p(), &d);
        let base = Jet2::default();
        let eps = 1e-6;
        let fields: [(fn(&mut Jet2) -> &mut f64, fn(&Jet2) -> f64); 7] = [
            (|j| &mut j.u, |g| g.u),
            (|j| &mut j.du_dx, |g| g.du_dx),
            (|j| &mut j.du_dnu, |g| g.du_dnu),
            (|j| &mut j.du_dtau, |g| g.du_dtau),
            (|j| &mut j.d2u_dx2, |g| g.d2u_dx2),
            (|j| &mut j.d2u_dnu2, |g| g.d2u_dnu2),
            (|j| &mut j.d2u_dxdnu, |g| g.d2u_dxdnu),
        ];
        for (set, get) in fields {
            let mut jp = base;
            *set(&mut jp) = eps;
            let slope = (residual(&p(), &d, &jp) - residual(&p(), &d, &base)) / eps;
            assert!((slope - get(&g)).abs() < 1e-9);
        }
    }

    #[test]
    fn loss_phys_examples() {
        assert_eq!(loss_phys(&[0.0, 0.0], 0.1).unwrap(), 0.0);
        assert!((loss_phys(&[1.0], 0.1).unwrap() - 1.1).abs() < 1e-15);
        assert!((loss_phys(&[1.0, -1.0], 0.1).unwrap() - 1.1).abs() < 1e-15);
        assert!(matches!(
            loss_phys(&[], 0.1),
            Err(PhysicsError::EmptyInput)
        ));
    }

    #[test]
    fn loss_bound_examples() {
        // a surface pinned at 0.1 against lower-side targets of zero
        struct Flat(f64);
        impl PriceSurface for Flat {
            fn value(&self, _: &HestonParams, _: &DomainPoint) -> Result<f64, DomainError> {
                Ok(self.0)
            }
            fn jet(&self, _: &HestonParams, _: &DomainPoint) -> Result<Jet2, DomainError> {
                Ok(Jet2 {
                    u: self.0,
                    ..Jet2::default()
                })
            }
        }
        let mut sampler = Sampler::new(DomainBounds::default(), 2.0, 4).unwrap();
        let boundary = sampler.sample_boundary(64).unwrap();
        let lower: Vec<_> = boundary
            .iter()
            .filter(|b| b.side == crate::sampling::BoundarySide::Lower)
            .cloned()
            .collect();
        let l = loss_bound(&Flat(0.1), &lower).unwrap();
        assert!((l - 0.01).abs() < 1e-15);
        // matching targets exactly gives zero
        struct Exact;
        impl PriceSurface for Exact {
            fn value(&self, p: &HestonParams, d: &DomainPoint) -> Result<f64, DomainError> {
                Ok(if d.x < 0.0 {
                    0.0
                } else {
                    d.x.exp() - (-p.r * d.tau).exp()
                })
            }
            fn jet(&self, _: &HestonParams, _: &DomainPoint) -> Result<Jet2, DomainError> {
                unreachable!()
            }
        }
        assert_eq!(loss_bound(&Exact, &boundary).unwrap(), 0.0);
    }

    #[test]
    fn loss_atm_checks_band_and_reduces_to_phys() {
        let mut sampler = Sampler::new(DomainBounds::default(), 2.0, 5).unwrap();
        let atm = sampler.sample_atm(32).unwrap();
        let s = DiscountedForwardSolution;
        let l = loss_atm(&s, &atm, 0.1).unwrap();
        assert!(l < 1e-20);
        let rs = residuals_of(&s, &atm, 8).unwrap();
        assert_eq!(l, loss_phys(&rs, 0.1).unwrap());
        let mut bad = atm.clone();
        bad[3].point.x = 0.2;
        assert!(matches!(
            loss_atm(&s, &bad, 0.1),
            Err(PhysicsError::OutsideAtmBand { index: 3, .. })
        ));
    }

    #[test]
    fn total_loss_composition_and_weights() {
        let w = LossWeights {
            lambda_b: 1.0,
            lambda_a: 1.0,
            lambda_max: 0.1,
        };
        let r = LossReport::compose(0.2, 0.1, 0.3, &w);
        assert!((r.total - 0.6).abs() < 1e-15);
        let w2 = LossWeights {
            lambda_b: 2.0,
            ..w
        };
        let r2 = LossReport::compose(0.2, 0.1, 0.3, &w2);
        assert!((r2.total - 0.7).abs() < 1e-15);
        let zero = LossReport::compose(0.0, 0.0, 0.0, &w);
        assert_eq!(zero.total, 0.0);
    }

    #[test]
    fn total_loss_agrees_with_backward_report_bitwise() {
        let model = init_model(
            MlpSpec::new(5, 16, 2, 8),
            MlpSpec::new(3, 16, 2, 8),
            DomainBounds::default(),
            77,
        )
        .unwrap();
        let mut sampler = Sampler::new(DomainBounds::default(), 2.0, 6).unwrap();
        let interior = sampler.sample_interior(40).unwrap();
        let atm = sampler.sample_atm(16).unwrap();
        let boundary = sampler.sample_boundary(16).unwrap();
        let batch = TrainBatch {
            interior: &interior,
            atm: &atm,
            boundary: &boundary,
        };
        let w = LossWeights::default();
        let forward = total_loss(&model, &batch, &w, 8).unwrap();
        let (reverse, _) = crate::autodiff::backward_params(&model, &batch, &w, 8).unwrap();
        assert_eq!(forward.total.to_bits(), reverse.total.to_bits());
        assert_eq!(forward.l_phys.to_bits(), reverse.l_phys.to_bits());
        assert_eq!(forward.l_bound.to_bits(), reverse.l_bound.to_bits());
        assert_eq!(forward.l_atm.to_bits(), reverse.l_atm.to_bits());
    }
}
