//! Finite-difference verification of the jet engine and the weight
//! gradients. Fourth-order central stencils in the physical inputs:
//! 4-point for first derivatives, 5-point for the pure second
//! derivatives, and the 16-point tensor-product cross stencil for the
//! mixed one, so stencil truncation sits orders of magnitude below the
//! tolerances being checked.

use super::{backward_params, PriceSurface, TrainBatch};
use crate::domain::{DomainBounds, DomainError, DomainPoint, HestonParams};
use crate::network::DeepOnet;
use crate::physics::{self, LossWeights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

pub const JET_FIELD_NAMES: [&str; 6] = [
    "du_dx",
    "du_dnu",
    "du_dtau",
    "d2u_dx2",
    "d2u_dnu2",
    "d2u_dxdnu",
];

#[derive(Clone, Copy, Debug)]
pub struct GradCheckField {
    pub field: &'static str,
    pub max_rel_err: f64,
    pub argmax: (HestonParams, DomainPoint),
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub fields: [GradCheckField; 6],
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.fields
            .iter()
            .map(|f| f.max_rel_err)
            .fold(0.0, f64::max)
    }

    /// Columnar text table: field, max relative error, argmax point.
    pub fn to_table(&self) -> String {
        let mut out = String::from("field        max-rel-err    argmax(x,nu,tau)\n");
        for f in &self.fields {
            out.push_str(&format!(
                "{:<12} {:<14.6e} ({:.4}, {:.4}, {:.4})\n",
                f.field, f.max_rel_err, f.argmax.1.x, f.argmax.1.nu, f.argmax.1.tau
            ));
        }
        out
    }
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.to_table())
    }
}

/// Relative error with the near-zero guard: absolute differences below
/// `1e-8` never count, and denominators are floored at `1e-6`.
fn guarded_rel_err(exact: f64, approx: f64) -> f64 {
    let diff = (exact - approx).abs();
    if diff < 1e-8 {
        return 0.0;
    }
    diff / approx.abs().max(1e-6)
}

/// Random in-bounds points with a `2h` stencil margin on every axis and the
/// payoff kink at `x = 0` excluded by a `3h` band.
pub fn grad_check_points(
    bounds: &DomainBounds,
    n: usize,
    h: f64,
    seed: u64,
) -> Vec<(HestonParams, DomainPoint)> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let margin = 2.5 * h;
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let kappa = rng.gen_range(bounds.kappa.0..bounds.kappa.1);
        let theta = rng.gen_range(bounds.theta.0..bounds.theta.1);
        let sigma_cap = (2.0 * kappa * theta).sqrt().min(bounds.sigma.1);
        if sigma_cap <= bounds.sigma.0 {
            continue;
        }
        let sigma = rng.gen_range(bounds.sigma.0..sigma_cap) * 0.999;
        let p = HestonParams::new(
            kappa,
            theta,
            sigma,
            rng.gen_range(bounds.rho.0..bounds.rho.1),
            rng.gen_range(bounds.r.0..bounds.r.1),
        );
        if !p.feller_holds() {
            continue;
        }
        let x = rng.gen_range(bounds.x.0 + margin..bounds.x.1 - margin);
        if x.abs() < 3.0 * h {
            continue; // the ansatz kink breaks stencils across x = 0
        }
        let d = DomainPoint::new(
            x,
            rng.gen_range(bounds.nu.0 + margin..bounds.nu.1 - margin),
            rng.gen_range(bounds.tau.0 + margin..bounds.tau.1 - margin),
        );
        out.push((p, d));
    }
    out
}

/// Compares every jet field against central differences of the surface
/// value at physical-input steps `h`, reporting per-field maxima.
pub fn grad_check(
    surface: &dyn PriceSurface,
    points: &[(HestonParams, DomainPoint)],
    h: f64,
) -> Result<GradCheckReport, DomainError> {
    assert!(h > 0.0, "step must be positive");
    let mut fields = JET_FIELD_NAMES.map(|name| GradCheckField {
        field: name,
        max_rel_err: 0.0,
        argmax: (
            HestonParams::new(0.0, 0.0, 0.0, 0.0, 0.0),
            DomainPoint::new(0.0, 0.0, 0.0),
        ),
    });
    for (p, d) in points {
        let jet = surface.jet(p, d)?;
        let f = |x: f64, nu: f64, tau: f64| surface.value(p, &DomainPoint::new(x, nu, tau));
        let (x, nu, tau) = (d.x, d.nu, d.tau);

        // fourth-order 4-point first derivative
        let first = |m2: f64, m1: f64, p1: f64, p2: f64| {
            (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h)
        };
        let fd_x = first(
            f(x - 2.0 * h, nu, tau)?,
            f(x - h, nu, tau)?,
            f(x + h, nu, tau)?,
            f(x + 2.0 * h, nu, tau)?,
        );
        let fd_nu = first(
            f(x, nu - 2.0 * h, tau)?,
            f(x, nu - h, tau)?,
            f(x, nu + h, tau)?,
            f(x, nu + 2.0 * h, tau)?,
        );
        let fd_tau = first(
            f(x, nu, tau - 2.0 * h)?,
            f(x, nu, tau - h)?,
            f(x, nu, tau + h)?,
            f(x, nu, tau + 2.0 * h)?,
        );
        // fourth-order 5-point second derivative
        let second = |m2: f64, m1: f64, c: f64, p1: f64, p2: f64| {
            (-m2 + 16.0 * m1 - 30.0 * c + 16.0 * p1 - p2) / (12.0 * h * h)
        };
        let c = f(x, nu, tau)?;
        let fd_xx = second(
            f(x - 2.0 * h, nu, tau)?,
            f(x - h, nu, tau)?,
            c,
            f(x + h, nu, tau)?,
            f(x + 2.0 * h, nu, tau)?,
        );
        let fd_nunu = second(
            f(x, nu - 2.0 * h, tau)?,
            f(x, nu - h, tau)?,
            c,
            f(x, nu + h, tau)?,
            f(x, nu + 2.0 * h, tau)?,
        );
        // fourth-order mixed derivative: tensor product of the 4-point
        // first-derivative weights
        let offsets = [-2.0 * h, -h, h, 2.0 * h];
        let weights = [1.0 / (12.0 * h), -8.0 / (12.0 * h), 8.0 / (12.0 * h), -1.0 / (12.0 * h)];
        let mut fd_xnu = 0.0;
        for (ox, wx) in offsets.iter().zip(&weights) {
            for (onu, wnu) in offsets.iter().zip(&weights) {
                fd_xnu += wx * wnu * f(x + ox, nu + onu, tau)?;
            }
        }

        let exact = [
            jet.du_dx,
            jet.du_dnu,
            jet.du_dtau,
            jet.d2u_dx2,
            jet.d2u_dnu2,
            jet.d2u_dxdnu,
        ];
        let approx = [fd_x, fd_nu, fd_tau, fd_xx, fd_nunu, fd_xnu];
        for ((slot, e), a) in fields.iter_mut().zip(exact).zip(approx) {
            let rel = guarded_rel_err(e, a);
            if rel > slot.max_rel_err {
                slot.max_rel_err = rel;
                slot.argmax = (*p, *d);
            }
        }
    }
    Ok(GradCheckReport { fields })
}

/// Directional derivative of the total loss along `dir` in weight space:
/// the reverse-mode value against a central difference at step `h`.
/// Returns `(analytic, numeric)`.
pub fn directional_loss_check(
    model: &DeepOnet,
    batch: &TrainBatch,
    weights: &LossWeights,
    chunk: usize,
    dir: &[f64],
    h: f64,
) -> Result<(f64, f64), crate::autodiff::AutodiffError> {
    let (_, grad) = backward_params(model, batch, weights, chunk)?;
    let analytic: f64 = grad.to_flat().iter().zip(dir).map(|(g, v)| g * v).sum();
    let base = model.params_flat();
    let mut shifted = model.clone();
    let plus: Vec<f64> = base.iter().zip(dir).map(|(w, v)| w + h * v).collect();
    shifted.set_params_flat(&plus).expect("same shape");
    let lp = physics::total_loss(&shifted, batch, weights, chunk)?.total;
    let minus: Vec<f64> = base.iter().zip(dir).map(|(w, v)| w - h * v).collect();
    shifted.set_params_flat(&minus).expect("same shape");
    let lm = physics::total_loss(&shifted, batch, weights, chunk)?.total;
    Ok((analytic, (lp - lm) / (2.0 * h)))
}
