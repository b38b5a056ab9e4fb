//! Exact differentiation of the surrogate: forward propagation of the six
//! input partials the Heston operator needs, and reverse-mode gradients of
//! the training loss with respect to every weight. A finite-difference
//! verification harness lives in [`check`].

mod check;
mod eval;

pub use check::{
    directional_loss_check, grad_check, grad_check_points, GradCheckField, GradCheckReport,
};
pub(crate) use eval::Evaluator;

use crate::domain::{DomainError, DomainPoint, HestonParams};
use crate::network::{DeepOnet, NetworkError};
use crate::physics::{self, LossReport, LossWeights};
use crate::sampling::{BoundaryPoint, CollocationPoint};
use rayon::prelude::*;
use thiserror::Error;

/// The prediction value together with the six partial derivatives used by
/// the pricing operator and the Greeks, all in physical input units.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet2 {
    pub u: f64,
    pub du_dx: f64,
    pub du_dnu: f64,
    pub du_dtau: f64,
    pub d2u_dx2: f64,
    pub d2u_dnu2: f64,
    pub d2u_dxdnu: f64,
}

#[derive(Error, Debug)]
pub enum AutodiffError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite loss at {set} point {index}")]
    NonFiniteLoss { set: &'static str, index: usize },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Anything that can be priced and differentiated at a point: the trained
/// operator, or an analytic solution injected for harness checks.
pub trait PriceSurface: Sync {
    fn value(&self, p: &HestonParams, d: &DomainPoint) -> Result<f64, DomainError>;
    fn jet(&self, p: &HestonParams, d: &DomainPoint) -> Result<Jet2, DomainError>;
}

fn domain_err(e: NetworkError) -> DomainError {
    match e {
        NetworkError::Domain(d) => d,
        other => unreachable!("evaluation can only fail on domain errors: {other}"),
    }
}

impl PriceSurface for DeepOnet {
    fn value(&self, p: &HestonParams, d: &DomainPoint) -> Result<f64, DomainError> {
        self.u_pred(p, d).map_err(domain_err)
    }

    fn jet(&self, p: &HestonParams, d: &DomainPoint) -> Result<Jet2, DomainError> {
        forward_jet(self, p, d)
    }
}

/// Exact partials of `u_pred` with respect to physical `x`, `nu`, `tau`.
pub fn forward_jet(
    model: &DeepOnet,
    p: &HestonParams,
    d: &DomainPoint,
) -> Result<Jet2, DomainError> {
    Evaluator::new(model).forward(p, d)
}

/// Jet of the unconstrained network output (before the ansatz); used by
/// diagnostics and structure tests.
pub fn forward_raw_jet(
    model: &DeepOnet,
    p: &HestonParams,
    d: &DomainPoint,
) -> Result<Jet2, DomainError> {
    let mut ev = Evaluator::new(model);
    ev.forward(p, d)?;
    Ok(ev.raw_jet())
}

/// Per-layer gradient arrays congruent with the model's weight shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamGradient {
    pub branch: Vec<LayerGrad>,
    pub trunk: Vec<LayerGrad>,
}

impl ParamGradient {
    pub fn zeros_like(model: &DeepOnet) -> Self {
        let make = |mlp: &crate::network::Mlp| {
            mlp.layers
                .iter()
                .map(|l| LayerGrad {
                    w: vec![0.0; l.w.len()],
                    b: vec![0.0; l.b.len()],
                })
                .collect()
        };
        Self {
            branch: make(&model.branch),
            trunk: make(&model.trunk),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        let add = |a: &mut Vec<LayerGrad>, b: &Vec<LayerGrad>| {
            for (la, lb) in a.iter_mut().zip(b) {
                for (x, y) in la.w.iter_mut().zip(&lb.w) {
                    *x += y;
                }
                for (x, y) in la.b.iter_mut().zip(&lb.b) {
                    *x += y;
                }
            }
        };
        add(&mut self.branch, &other.branch);
        add(&mut self.trunk, &other.trunk);
    }

    pub fn scale(&mut self, c: f64) {
        for layers in [&mut self.branch, &mut self.trunk] {
            for l in layers.iter_mut() {
                l.w.iter_mut().for_each(|x| *x *= c);
                l.b.iter_mut().for_each(|x| *x *= c);
            }
        }
    }

    /// Flattened in the same order as [`DeepOnet::params_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layers in [&self.branch, &self.trunk] {
            for l in layers {
                out.extend_from_slice(&l.w);
                out.extend_from_slice(&l.b);
            }
        }
        out
    }

    pub fn norm(&self) -> f64 {
        let mut acc = 0.0;
        for layers in [&self.branch, &self.trunk] {
            for l in layers {
                acc += l.w.iter().map(|x| x * x).sum::<f64>();
                acc += l.b.iter().map(|x| x * x).sum::<f64>();
            }
        }
        acc.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        for layers in [&self.branch, &self.trunk] {
            for l in layers {
                if !l.w.iter().chain(&l.b).all(|x| x.is_finite()) {
                    return false;
                }
            }
        }
        true
    }
}

/// One training batch: an interior mini-batch plus the full ATM and
/// boundary sets. Any slice may be empty, but not all three.
#[derive(Clone, Copy, Debug)]
pub struct TrainBatch<'a> {
    pub interior: &'a [CollocationPoint],
    pub atm: &'a [CollocationPoint],
    pub boundary: &'a [BoundaryPoint],
}

impl<'a> TrainBatch<'a> {
    pub fn len(&self) -> usize {
        self.interior.len() + self.atm.len() + self.boundary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

struct ChunkOutcome {
    kind: usize, // 0 interior, 1 atm, 2 boundary
    loss_sum: f64,
    grad: ParamGradient,
}

/// Loss and gradient of the total objective
/// `L_phys + lambda_b L_bound + lambda_a L_atm` over the batch.
///
/// Work is split into fixed-size chunks processed in parallel and combined
/// in chunk order, so the result is bitwise reproducible for a fixed chunk
/// size regardless of thread count.
pub fn backward_params(
    model: &DeepOnet,
    batch: &TrainBatch,
    weights: &LossWeights,
    chunk_size: usize,
) -> Result<(LossReport, ParamGradient), AutodiffError> {
    if batch.is_empty() {
        return Err(AutodiffError::EmptyBatch);
    }
    let chunk_size = chunk_size.max(1);
    let n_int = batch.interior.len();
    let n_atm = batch.atm.len();
    let n_bnd = batch.boundary.len();

    // per-point adjoint scales fold the set means and weights into the seed
    let int_scale = if n_int > 0 { 1.0 / n_int as f64 } else { 0.0 };
    let atm_scale = if n_atm > 0 {
        weights.lambda_a / n_atm as f64
    } else {
        0.0
    };
    let bnd_scale = if n_bnd > 0 {
        weights.lambda_b / n_bnd as f64
    } else {
        0.0
    };

    struct Task<'a> {
        kind: usize,
        offset: usize,
        interior: Option<&'a [CollocationPoint]>,
        boundary: Option<&'a [BoundaryPoint]>,
    }
    let mut tasks = Vec::new();
    for (kind, pts) in [(0usize, batch.interior), (1, batch.atm)] {
        for (ci, slice) in pts.chunks(chunk_size).enumerate() {
            tasks.push(Task {
                kind,
                offset: ci * chunk_size,
                interior: Some(slice),
                boundary: None,
            });
        }
    }
    for (ci, slice) in batch.boundary.chunks(chunk_size).enumerate() {
        tasks.push(Task {
            kind: 2,
            offset: ci * chunk_size,
            interior: None,
            boundary: Some(slice),
        });
    }

    let results: Vec<Result<ChunkOutcome, AutodiffError>> = tasks
        .par_iter()
        .map(|task| {
            let mut ev = Evaluator::new(model);
            let mut grad = ParamGradient::zeros_like(model);
            let mut loss_sum = 0.0;
            match task.kind {
                0 | 1 => {
                    let (set_name, seed_scale) = if task.kind == 0 {
                        ("interior", int_scale)
                    } else {
                        ("atm", atm_scale)
                    };
                    for (i, cp) in task.interior.unwrap().iter().enumerate() {
                        let jet = ev.forward(&cp.params, &cp.point)?;
                        let r = physics::residual(&cp.params, &cp.point, &jet);
                        let point_loss = r * r + weights.lambda_max * r.powi(4);
                        if !point_loss.is_finite() {
                            return Err(AutodiffError::NonFiniteLoss {
                                set: set_name,
                                index: task.offset + i,
                            });
                        }
                        loss_sum += point_loss;
                        let dl_dr = 2.0 * r + 4.0 * weights.lambda_max * r.powi(3);
                        let u_adj = physics::residual_gradient(&cp.params, &cp.point)
                            .scaled(dl_dr * seed_scale);
                        ev.reverse(&u_adj, &mut grad);
                    }
                }
                _ => {
                    for (i, bp) in task.boundary.unwrap().iter().enumerate() {
                        let jet = ev.forward(&bp.colloc.params, &bp.colloc.point)?;
                        let err = jet.u - bp.target;
                        let point_loss = err * err;
                        if !point_loss.is_finite() {
                            return Err(AutodiffError::NonFiniteLoss {
                                set: "boundary",
                                index: task.offset + i,
                            });
                        }
                        loss_sum += point_loss;
                        let u_adj = Jet2 {
                            u: 2.0 * err * bnd_scale,
                            ..Jet2::default()
                        };
                        ev.reverse(&u_adj, &mut grad);
                    }
                }
            }
            Ok(ChunkOutcome {
                kind: task.kind,
                loss_sum,
                grad,
            })
        })
        .collect();

    let mut grad = ParamGradient::zeros_like(model);
    let mut sums = [0.0f64; 3];
    for r in results {
        let out = r?;
        sums[out.kind] += out.loss_sum;
        grad.add_assign(&out.grad);
    }
    let l_phys = if n_int > 0 {
        sums[0] / n_int as f64
    } else {
        0.0
    };
    let l_atm = if n_atm > 0 { sums[1] / n_atm as f64 } else { 0.0 };
    let l_bound = if n_bnd > 0 {
        sums[2] / n_bnd as f64
    } else {
        0.0
    };
    let report = LossReport::compose(l_phys, l_bound, l_atm, weights);
    if !report.total.is_finite() {
        return Err(AutodiffError::NonFiniteLoss {
            set: "total",
            index: 0,
        });
    }
    Ok((report, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{payoff_dx, DomainBounds};
    use crate::network::act::softplus;
    use crate::network::{init_model, MlpSpec};
    use crate::sampling::{BoundarySide, Sampler};

    fn model(seed: u64) -> DeepOnet {
        init_model(
            MlpSpec::new(5, 16, 3, 8),
            MlpSpec::new(3, 16, 3, 8),
            DomainBounds::default(),
            seed,
        )
        .unwrap()
    }

    fn point() -> (HestonParams, DomainPoint) {
        (
            HestonParams::new(2.0, 0.09, 0.3, -0.7, 0.03),
            DomainPoint::new(0.45, 0.17, 0.6),
        )
    }

    #[test]
    fn jet_value_field_equals_u_pred_bitwise() {
        let m = model(1);
        let (p, d) = point();
        let jet = forward_jet(&m, &p, &d).unwrap();
        assert_eq!(jet.u.to_bits(), m.u_pred(&p, &d).unwrap().to_bits());
    }

    #[test]
    fn terminal_slice_derivatives() {
        // at tau = 0: du_dx = phi'(x); du_dtau = softplus(raw)
        let m = model(2);
        let p = HestonParams::new(2.0, 0.09, 0.3, -0.7, 0.03);
        let d = DomainPoint::new(0.5, 0.2, 0.0);
        let jet = forward_jet(&m, &p, &d).unwrap();
        assert!((jet.du_dx - 0.5f64.exp()).abs() < 1e-14);
        let raw = m.raw_output(&p, &d).unwrap();
        assert!((jet.du_dtau - softplus(raw)).abs() < 1e-14);
        assert!((jet.du_dx - payoff_dx(0.5)).abs() < 1e-14);
    }

    #[test]
    fn linear_network_has_zero_second_partials() {
        // zero hidden weights with biases in the linear range of nothing:
        // make the trunk exactly affine by zeroing every hidden weight so
        // each gelu sees a constant, then check the raw jet curvature
        let mut m = model(3);
        for l in m.trunk.layers.iter_mut().take(m.trunk.spec.hidden_depth) {
            l.w.iter_mut().for_each(|w| *w = 0.0);
            l.b.iter_mut().for_each(|b| *b = 0.3);
        }
        let (p, d) = point();
        let raw = super::forward_raw_jet(&m, &p, &d).unwrap();
        assert_eq!(raw.d2u_dx2, 0.0);
        assert_eq!(raw.d2u_dnu2, 0.0);
        assert_eq!(raw.d2u_dxdnu, 0.0);
        assert_eq!(raw.du_dx, 0.0); // constant trunk input path
    }

    #[test]
    fn jets_match_finite_differences_of_u_pred() {
        let m = model(4);
        let (p, _) = point();
        let h = 1e-4;
        for &(x, nu, tau) in &[(0.45, 0.17, 0.6), (-0.8, 0.05, 0.31), (1.2, 0.3, 0.9)] {
            let d = DomainPoint::new(x, nu, tau);
            let jet = forward_jet(&m, &p, &d).unwrap();
            let f = |x: f64, nu: f64, tau: f64| {
                m.u_pred(&p, &DomainPoint::new(x, nu, tau)).unwrap()
            };
            let fd_x = (f(x + h, nu, tau) - f(x - h, nu, tau)) / (2.0 * h);
            let fd_nu = (f(x, nu + h, tau) - f(x, nu - h, tau)) / (2.0 * h);
            let fd_tau = (f(x, nu, tau + h) - f(x, nu, tau - h)) / (2.0 * h);
            let fd_xx = (f(x + h, nu, tau) - 2.0 * f(x, nu, tau) + f(x - h, nu, tau)) / (h * h);
            let fd_nunu = (f(x, nu + h, tau) - 2.0 * f(x, nu, tau) + f(x, nu - h, tau)) / (h * h);
            let fd_xnu = (f(x + h, nu + h, tau) - f(x + h, nu - h, tau) - f(x - h, nu + h, tau)
                + f(x - h, nu - h, tau))
                / (4.0 * h * h);
            assert!((jet.du_dx - fd_x).abs() < 1e-6, "du_dx at x={x}");
            assert!((jet.du_dnu - fd_nu).abs() < 1e-6, "du_dnu");
            assert!((jet.du_dtau - fd_tau).abs() < 1e-6, "du_dtau");
            assert!((jet.d2u_dx2 - fd_xx).abs() < 1e-4, "d2u_dx2");
            assert!((jet.d2u_dnu2 - fd_nunu).abs() < 1e-4, "d2u_dnu2");
            assert!((jet.d2u_dxdnu - fd_xnu).abs() < 1e-4, "d2u_dxdnu");
        }
    }

    fn small_batch(seed: u64) -> (Vec<CollocationPoint>, Vec<CollocationPoint>, Vec<crate::sampling::BoundaryPoint>) {
        let mut s = Sampler::new(DomainBounds::default(), 2.0, seed).unwrap();
        (
            s.sample_interior(24).unwrap(),
            s.sample_atm(8).unwrap(),
            s.sample_boundary(8).unwrap(),
        )
    }

    #[test]
    fn gradient_matches_directional_finite_difference() {
        let m = model(5);
        let (interior, atm, boundary) = small_batch(50);
        let batch = TrainBatch {
            interior: &interior,
            atm: &atm,
            boundary: &boundary,
        };
        let w = LossWeights::default();
        let (report, grad) = backward_params(&m, &batch, &w, 8).unwrap();
        assert!(report.total.is_finite());
        let flat_grad = grad.to_flat();
        let base = m.params_flat();

        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        let h = 1e-4;
        for trial in 0..5 {
            let dir: Vec<f64> = (0..base.len())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let norm: f64 = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let dir: Vec<f64> = dir.iter().map(|v| v / norm).collect();
            let analytic: f64 = flat_grad.iter().zip(&dir).map(|(g, v)| g * v).sum();
            let mut wplus = m.clone();
            let mut wminus = m.clone();
            let plus: Vec<f64> = base.iter().zip(&dir).map(|(w, v)| w + h * v).collect();
            let minus: Vec<f64> = base.iter().zip(&dir).map(|(w, v)| w - h * v).collect();
            wplus.set_params_flat(&plus).unwrap();
            wminus.set_params_flat(&minus).unwrap();
            let lp = physics::total_loss(&wplus, &batch, &w, 8).unwrap().total;
            let lm = physics::total_loss(&wminus, &batch, &w, 8).unwrap().total;
            let numeric = (lp - lm) / (2.0 * h);
            let denom = numeric.abs().max(1e-10);
            assert!(
                (analytic - numeric).abs() / denom < 1e-4,
                "trial {trial}: analytic {analytic} vs numeric {numeric}"
            );
        }
    }

    #[test]
    fn zero_residual_batch_has_zero_gradient() {
        // boundary points whose targets equal the current prediction give a
        // loss exactly at its minimum; the assembled gradient must vanish
        let m = model(6);
        let (_, _, mut boundary) = small_batch(51);
        for bp in &mut boundary {
            bp.target = m.u_pred(&bp.colloc.params, &bp.colloc.point).unwrap();
        }
        let batch = TrainBatch {
            interior: &[],
            atm: &[],
            boundary: &boundary,
        };
        let (report, grad) = backward_params(&m, &batch, &LossWeights::default(), 4).unwrap();
        assert_eq!(report.l_bound, 0.0);
        assert!(grad.norm() < 1e-10);
    }

    #[test]
    fn duplicated_batch_keeps_mean_gradient() {
        let m = model(7);
        let (interior, _, _) = small_batch(52);
        let doubled: Vec<CollocationPoint> =
            interior.iter().chain(interior.iter()).copied().collect();
        let w = LossWeights::default();
        let single = TrainBatch {
            interior: &interior,
            atm: &[],
            boundary: &[],
        };
        let double = TrainBatch {
            interior: &doubled,
            atm: &[],
            boundary: &[],
        };
        let (r1, g1) = backward_params(&m, &single, &w, 100).unwrap();
        let (r2, g2) = backward_params(&m, &double, &w, 100).unwrap();
        assert!((r1.total - r2.total).abs() <= 1e-12 * r1.total.abs().max(1.0));
        let f1 = g1.to_flat();
        let f2 = g2.to_flat();
        for (a, b) in f1.iter().zip(&f2) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-9));
        }
    }

    #[test]
    fn gradient_is_linear_in_loss_scaling() {
        let m = model(8);
        let (_, atm, _) = small_batch(53);
        let batch = TrainBatch {
            interior: &[],
            atm: &atm,
            boundary: &[],
        };
        let w1 = LossWeights {
            lambda_a: 1.0,
            ..LossWeights::default()
        };
        let w2 = LossWeights {
            lambda_a: 2.0,
            ..LossWeights::default()
        };
        let (_, g1) = backward_params(&m, &batch, &w1, 16).unwrap();
        let (_, g2) = backward_params(&m, &batch, &w2, 16).unwrap();
        for (a, b) in g1.to_flat().iter().zip(g2.to_flat()) {
            assert_eq!(2.0 * a, b); // exact doubling
        }
    }

    #[test]
    fn empty_batch_is_an_error() {
        let m = model(9);
        let batch = TrainBatch {
            interior: &[],
            atm: &[],
            boundary: &[],
        };
        assert!(matches!(
            backward_params(&m, &batch, &LossWeights::default(), 8),
            Err(AutodiffError::EmptyBatch)
        ));
    }

    #[test]
    fn gradient_independent_of_chunk_boundaries_to_tolerance() {
        let m = model(10);
        let (interior, atm, boundary) = small_batch(54);
        let batch = TrainBatch {
            interior: &interior,
            atm: &atm,
            boundary: &boundary,
        };
        let w = LossWeights::default();
        let (r1, g1) = backward_params(&m, &batch, &w, 5).unwrap();
        let (r2, g2) = backward_params(&m, &batch, &w, 64).unwrap();
        assert!((r1.total - r2.total).abs() < 1e-13 * r1.total.abs().max(1.0));
        for (a, b) in g1.to_flat().iter().zip(g2.to_flat()) {
            assert!((a - b).abs() < 1e-12 * a.abs().max(1e-9));
        }
    }

    #[test]
    fn boundary_side_tags_are_exercised() {
        // lower side sits at phi(x_min) = 0, so an untrained model's
        // boundary loss is dominated by the softplus correction there
        let (_, _, boundary) = small_batch(55);
        assert!(boundary.iter().any(|b| b.side == BoundarySide::Lower));
        assert!(boundary.iter().any(|b| b.side == BoundarySide::Upper));
    }
}
