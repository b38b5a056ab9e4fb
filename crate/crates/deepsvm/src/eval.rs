//! Evaluation machinery behind the CLI: surrogate-vs-oracle comparison
//! tables, Greeks, residual maps over `(x, nu)` grids, and the self-check
//! suite.

use crate::autodiff::{self, Jet2, PriceSurface};
use crate::domain::{DomainBounds, DomainError, DomainPoint, HestonParams};
use crate::oracle::{self, OracleError};
use crate::physics;
use crate::sampling::{Sampler, SamplingError};
use rayon::prelude::*;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum EvalError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Call Delta from a prediction jet: `Delta = e^{-x} du/dx`.
pub fn delta_from_jet(jet: &Jet2, x: f64) -> f64 {
    (-x).exp() * jet.du_dx
}

/// Call Gamma from a prediction jet:
/// `Gamma = e^{-2x} / K * (d2u/dx2 - du/dx)`.
pub fn gamma_from_jet(jet: &Jet2, x: f64, strike: f64) -> f64 {
    (-2.0 * x).exp() / strike * (jet.d2u_dx2 - jet.du_dx)
}

/// One comparison record; the error columns are recomputable from the
/// stored fields.
#[derive(Clone, Copy, Debug)]
pub struct ComparisonRow {
    pub params: HestonParams,
    pub x: f64,
    pub nu0: f64,
    pub tau: f64,
    pub model_price: f64,
    pub oracle_price: f64,
    pub abs_error: f64,
    pub model_delta: f64,
    pub oracle_delta: f64,
    pub model_gamma: f64,
    pub oracle_gamma: f64,
}

pub const COMPARISON_CSV_HEADER: &str = "kappa,theta,sigma,rho,r,x,nu0,tau,\
model_price,oracle_price,abs_error,model_delta,oracle_delta,model_gamma,oracle_gamma";

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorStats {
    pub count: usize,
    pub mae: f64,
    pub max: f64,
}

impl ErrorStats {
    fn from_errors(errors: impl Iterator<Item = f64>) -> Self {
        let mut count = 0usize;
        let mut sum = 0.0;
        let mut max = 0.0f64;
        for e in errors {
            count += 1;
            sum += e;
            max = max.max(e);
        }
        Self {
            count,
            mae: if count > 0 { sum / count as f64 } else { 0.0 },
            max,
        }
    }
}

/// Price-error summary over a row set, with the ATM band `|x| <= 0.05`
/// reported separately. A pure function of the row data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComparisonSummary {
    pub all: ErrorStats,
    pub atm_band: ErrorStats,
    pub outside_band: ErrorStats,
}

pub fn summarize(rows: &[ComparisonRow]) -> ComparisonSummary {
    ComparisonSummary {
        all: ErrorStats::from_errors(rows.iter().map(|r| r.abs_error)),
        atm_band: ErrorStats::from_errors(
            rows.iter()
                .filter(|r| r.x.abs() <= physics::ATM_BAND)
                .map(|r| r.abs_error),
        ),
        outside_band: ErrorStats::from_errors(
            rows.iter()
                .filter(|r| r.x.abs() > physics::ATM_BAND)
                .map(|r| r.abs_error),
        ),
    }
}

/// Draws `n` Feller-valid parameter vectors (uniform over the table ranges
/// with rejection) from a dedicated sampler stream.
pub fn draw_params(
    n: usize,
    seed: u64,
    bounds: &DomainBounds,
) -> Result<Vec<HestonParams>, SamplingError> {
    let mut sampler = Sampler::new(*bounds, crate::sampling::DEFAULT_ALPHA_X, seed)?;
    Ok(sampler
        .sample_interior(n)?
        .into_iter()
        .map(|cp| cp.params)
        .collect())
}

#[derive(Clone, Debug)]
pub struct CompareSpec {
    pub n_params: usize,
    pub grid_n: usize,
    pub nu0_slices: Vec<f64>,
    pub tau_slices: Vec<f64>,
    pub strike: f64,
    pub seed: u64,
}

impl Default for CompareSpec {
    fn default() -> Self {
        Self {
            n_params: 3,
            grid_n: 41,
            nu0_slices: vec![0.04, 0.2],
            tau_slices: vec![0.25, 1.0],
            strike: 1.0,
            seed: 0,
        }
    }
}

/// Sweeps `x` over a uniform grid at fixed `(nu0, tau)` slices for each
/// sampled parameter vector, pricing with the surface and the oracle.
pub fn compare(
    surface: &dyn PriceSurface,
    spec: &CompareSpec,
    bounds: &DomainBounds,
) -> Result<Vec<ComparisonRow>, EvalError> {
    let params = draw_params(spec.n_params, spec.seed, bounds)?;
    let (x_min, x_max) = bounds.x;
    let mut cells = Vec::new();
    for p in &params {
        for &nu0 in &spec.nu0_slices {
            for &tau in &spec.tau_slices {
                for i in 0..spec.grid_n {
                    let x = x_min + (x_max - x_min) * i as f64 / (spec.grid_n - 1).max(1) as f64;
                    cells.push((*p, x, nu0, tau));
                }
            }
        }
    }
    let rows: Vec<Result<ComparisonRow, EvalError>> = cells
        .par_iter()
        .map(|&(p, x, nu0, tau)| {
            let d = DomainPoint::new(x, nu0, tau);
            let jet = surface.jet(&p, &d)?;
            let model_price = spec.strike * jet.u;
            let oracle_price = oracle::price_call(&p, x, nu0, tau, spec.strike)?;
            let row = ComparisonRow {
                params: p,
                x,
                nu0,
                tau,
                model_price,
                oracle_price,
                abs_error: (model_price - oracle_price).abs(),
                model_delta: delta_from_jet(&jet, x),
                oracle_delta: oracle::delta_oracle(&p, x, nu0, tau)?,
                model_gamma: gamma_from_jet(&jet, x, spec.strike),
                oracle_gamma: oracle::gamma_oracle(&p, x, nu0, tau, spec.strike)?,
            };
            Ok(row)
        })
        .collect();
    rows.into_iter().collect()
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from(COMPARISON_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let p = r.params;
        let _ = writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            p.kappa, p.theta, p.sigma, p.rho, p.r,
            r.x, r.nu0, r.tau,
            r.model_price, r.oracle_price, r.abs_error,
            r.model_delta, r.oracle_delta, r.model_gamma, r.oracle_gamma
        );
    }
    out
}

pub const RESIDUAL_MAP_CSV_HEADER: &str = "x,nu,mean_r2";

#[derive(Clone, Copy, Debug)]
pub struct GridCell {
    pub x: f64,
    pub nu: f64,
    pub mean_r2: f64,
}

fn grid_coords(bounds: &DomainBounds, n: usize) -> Vec<(f64, f64)> {
    let (x_min, x_max) = bounds.x;
    let (nu_min, nu_max) = bounds.nu;
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        let x = x_min + (x_max - x_min) * i as f64 / (n - 1).max(1) as f64;
        for j in 0..n {
            let nu = nu_min + (nu_max - nu_min) * j as f64 / (n - 1).max(1) as f64;
            out.push((x, nu));
        }
    }
    out
}

/// Mode A: squared residual at a fixed maturity slice, averaged over
/// `n_params` sampled parameter vectors, on an `n x n` grid in `(x, nu)`.
pub fn residual_map_param_avg(
    surface: &dyn PriceSurface,
    bounds: &DomainBounds,
    grid_n: usize,
    tau: f64,
    n_params: usize,
    seed: u64,
) -> Result<Vec<GridCell>, EvalError> {
    let params = draw_params(n_params, seed, bounds)?;
    residual_map_inner(surface, bounds, grid_n, &params, &[tau])
}

/// Mode B: squared residual for one parameter vector, averaged over a
/// uniform maturity grid.
pub fn residual_map_tau_avg(
    surface: &dyn PriceSurface,
    bounds: &DomainBounds,
    grid_n: usize,
    params: &HestonParams,
    tau_grid: usize,
) -> Result<Vec<GridCell>, EvalError> {
    let taus: Vec<f64> = (0..tau_grid.max(1))
        .map(|i| bounds.tau.1 * i as f64 / (tau_grid - 1).max(1) as f64)
        .collect();
    residual_map_inner(surface, bounds, grid_n, std::slice::from_ref(params), &taus)
}

fn residual_map_inner(
    surface: &dyn PriceSurface,
    bounds: &DomainBounds,
    grid_n: usize,
    params: &[HestonParams],
    taus: &[f64],
) -> Result<Vec<GridCell>, EvalError> {
    let coords = grid_coords(bounds, grid_n);
    let cells: Vec<Result<GridCell, EvalError>> = coords
        .par_iter()
        .map(|&(x, nu)| {
            let mut acc = 0.0;
            for p in params {
                for &tau in taus {
                    let d = DomainPoint::new(x, nu, tau);
                    let jet = surface.jet(p, &d)?;
                    let r = physics::residual(p, &d, &jet);
                    acc += r * r;
                }
            }
            Ok(GridCell {
                x,
                nu,
                mean_r2: acc / (params.len() * taus.len()) as f64,
            })
        })
        .collect();
    cells.into_iter().collect()
}

pub fn residual_map_csv(cells: &[GridCell]) -> String {
    let mut out = String::from(RESIDUAL_MAP_CSV_HEADER);
    out.push('\n');
    for c in cells {
        let _ = writeln!(out, "{:.16e},{:.16e},{:.16e}", c.x, c.nu, c.mean_r2);
    }
    out
}

/// One self-check result line.
#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}] {:<24} {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

fn check(name: &'static str, run: impl FnOnce() -> Result<(bool, String), String>) -> CheckOutcome {
    match run() {
        Ok((passed, detail)) => CheckOutcome {
            name,
            passed,
            detail,
        },
        Err(e) => CheckOutcome {
            name,
            passed: false,
            detail: e,
        },
    }
}

/// Built-in verification suite: oracle cross-checks, autodiff fidelity,
/// ansatz invariants and sampler determinism, plus checkpoint integrity
/// when a checkpoint is supplied. Oracle checks run even if the checkpoint
/// fails to load.
pub fn run_self_checks(checkpoint: Option<&std::path::Path>, seed: u64) -> Vec<CheckOutcome> {
    let bounds = DomainBounds::default();
    let mut outcomes = Vec::new();

    outcomes.push(check("oracle-bs-limit", || {
        let p = HestonParams::new(3.0, 0.04, 1e-4, -0.5, 0.02);
        let heston = oracle::price_call(&p, 0.0, 0.04, 1.0, 1.0).map_err(|e| e.to_string())?;
        let bs = oracle::bs_price(1.0, 1.0, 0.02, 0.2, 1.0);
        let err = (heston - bs).abs();
        Ok((err < 1e-5, format!("|heston - bs| = {err:.2e}")))
    }));

    outcomes.push(check("oracle-parity", || {
        let p = HestonParams::new(2.0, 0.09, 0.3, -0.7, 0.03);
        let mut worst = 0.0f64;
        for (x, nu0, tau) in [(0.0, 0.04, 1.0), (0.5, 0.2, 0.5), (-1.0, 0.09, 0.25)] {
            let c = oracle::price_call(&p, x, nu0, tau, 1.0).map_err(|e| e.to_string())?;
            let put = oracle::price_put(&p, x, nu0, tau, 1.0).map_err(|e| e.to_string())?;
            let gap = (c - put - (x.exp() - (-p.r * tau).exp())).abs();
            worst = worst.max(gap);
        }
        Ok((worst < 1e-8, format!("max parity gap = {worst:.2e}")))
    }));

    outcomes.push(check("oracle-mc-agreement", || {
        let params = draw_params(2, crate::training::sub_seed(seed, 40), &bounds)
            .map_err(|e| e.to_string())?;
        let mut worst = f64::NEG_INFINITY;
        for (i, p) in params.iter().enumerate() {
            let (x, nu0, tau) = (0.1, 0.09, 0.5);
            let spec = oracle::McSpec {
                paths: 200_000,
                seed: seed + i as u64,
                ..oracle::McSpec::default()
            };
            let analytic = oracle::price_call(p, x, nu0, tau, 1.0).map_err(|e| e.to_string())?;
            let mc = oracle::price_call_mc(p, x, nu0, tau, 1.0, &spec).map_err(|e| e.to_string())?;
            let sigmas = (analytic - mc.mean).abs() / mc.std_err.max(1e-12);
            worst = worst.max(sigmas);
        }
        Ok((worst <= 4.0, format!("max deviation = {worst:.2} stderr")))
    }));

    outcomes.push(check("autodiff-jets", || {
        let model = crate::network::init_model(
            crate::network::MlpSpec::new(5, 32, 2, 32),
            crate::network::MlpSpec::new(3, 32, 2, 32),
            bounds,
            crate::training::sub_seed(seed, 41),
        )
        .map_err(|e| e.to_string())?;
        let pts = autodiff::grad_check_points(&bounds, 50, 1e-3, seed);
        let report = autodiff::grad_check(&model, &pts, 1e-3).map_err(|e| e.to_string())?;
        Ok((
            report.max_rel_err() < 1e-4,
            format!("max rel err = {:.2e}", report.max_rel_err()),
        ))
    }));

    outcomes.push(check("ansatz-invariants", || {
        let model = crate::network::init_model(
            crate::network::MlpSpec::new(5, 32, 2, 32),
            crate::network::MlpSpec::new(3, 32, 2, 32),
            bounds,
            crate::training::sub_seed(seed, 42),
        )
        .map_err(|e| e.to_string())?;
        let mut sampler = Sampler::new(bounds, 2.0, crate::training::sub_seed(seed, 43))
            .map_err(|e| e.to_string())?;
        let pts = sampler.sample_interior(20_000).map_err(|e| e.to_string())?;
        for cp in &pts {
            let u = model
                .u_pred(&cp.params, &cp.point)
                .map_err(|e| e.to_string())?;
            if u < crate::domain::payoff(cp.point.x) {
                return Ok((false, format!("intrinsic floor broken at {:?}", cp.point)));
            }
            let d0 = DomainPoint::new(cp.point.x, cp.point.nu, 0.0);
            let u0 = model.u_pred(&cp.params, &d0).map_err(|e| e.to_string())?;
            if u0 != crate::domain::payoff(cp.point.x) {
                return Ok((false, format!("terminal mismatch at x = {}", cp.point.x)));
            }
        }
        Ok((true, format!("floor and terminal hold at {} points", pts.len())))
    }));

    outcomes.push(check("sampler-determinism", || {
        let a = Sampler::new(bounds, 2.0, seed)
            .and_then(|mut s| s.sample_interior(512))
            .map_err(|e| e.to_string())?;
        let b = Sampler::new(bounds, 2.0, seed)
            .and_then(|mut s| s.sample_interior(512))
            .map_err(|e| e.to_string())?;
        Ok((a == b, "512 points reproduced bit-for-bit".into()))
    }));

    if let Some(path) = checkpoint {
        outcomes.push(check("checkpoint-load", || {
            match crate::network::load_checkpoint(path) {
                Ok((model, meta)) => {
                    let pts = autodiff::grad_check_points(&bounds, 20, 1e-3, seed);
                    let report =
                        autodiff::grad_check(&model, &pts, 1e-3).map_err(|e| e.to_string())?;
                    Ok((
                        report.max_rel_err() < 1e-4,
                        format!(
                            "stage {} step {}, jet check {:.2e}",
                            meta.stage,
                            meta.step,
                            report.max_rel_err()
                        ),
                    ))
                }
                Err(e) => Ok((false, format!("load error: {e}"))),
            }
        }));
    }

    outcomes
}
