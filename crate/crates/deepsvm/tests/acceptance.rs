//! Acceptance suite: one test per shipped guarantee, each printing a
//! PASS/FAIL line (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! The smoke-scale training behind criteria 6-8 runs once and is shared;
//! the determinism criterion retrains the identical configuration and
//! compares artifact bytes. The full-scale profile is `#[ignore]`d: it is
//! a long run and not part of CI.

use deepsvm::autodiff::{
    directional_loss_check, grad_check, grad_check_points, TrainBatch,
};
use deepsvm::domain::{payoff, DomainBounds, DomainPoint, HestonParams};
use deepsvm::eval::{self, delta_from_jet};
use deepsvm::oracle::{self, McScheme, McSpec};
use deepsvm::physics::{self, DiscountedForwardSolution, LossWeights};
use deepsvm::sampling::Sampler;
use deepsvm::training::{self, sub_seed, train, TrainConfig, TrainOutcome};
use deepsvm::PriceSurface;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

fn report(criterion: &str, passed: bool, detail: &str, t0: Instant) {
    println!(
        "criterion {criterion:<22} [{}] {detail} ({:.1} s)",
        if passed { "PASS" } else { "FAIL" },
        t0.elapsed().as_secs_f64()
    );
    assert!(passed, "criterion {criterion} failed: {detail}");
}

/// Shared smoke-scale run (criteria 6, 7 and 8 reuse it).
struct SmokeRun {
    outcome: TrainOutcome,
    out_dir: PathBuf,
}

fn smoke_config() -> TrainConfig {
    TrainConfig::desk_scale()
}

fn smoke_run() -> &'static SmokeRun {
    static RUN: OnceLock<SmokeRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let out_dir = std::env::temp_dir().join("deepsvm_acceptance_run_a");
        let _ = std::fs::remove_dir_all(&out_dir);
        let outcome = train(&smoke_config(), Some(&out_dir)).expect("smoke training");
        SmokeRun { outcome, out_dir }
    })
}

#[test]
fn criterion_1_oracle_bs_limit() {
    let t0 = Instant::now();
    let p = HestonParams::new(3.0, 0.04, 1e-4, -0.5, 0.02);
    let price = oracle::price_call(&p, 0.0, 0.04, 1.0, 1.0).unwrap();
    // Black-Scholes with vol sqrt(theta) = 0.2: d1 = 0.2, d2 = 0
    let bs_reference = 0.089_160_424_578_183_56;
    let bs_recomputed = oracle::bs_price(1.0, 1.0, 0.02, 0.2, 1.0);
    assert!((bs_reference - bs_recomputed).abs() < 1e-12);
    let err = (price - bs_reference).abs();
    report(
        "1-oracle-bs-limit",
        err < 1e-5,
        &format!("|heston - bs| = {err:.2e} (tol 1e-5)"),
        t0,
    );
}

#[test]
fn criterion_2_oracle_mc_cross_check() {
    let t0 = Instant::now();
    let bounds = DomainBounds::default();
    let draws = eval::draw_params(5, 20_260_102, &bounds).unwrap();
    let mut worst_dev = 0.0f64;
    let mut worst_parity = 0.0f64;
    for (i, p) in draws.iter().enumerate() {
        let (x, nu0, tau) = (0.15 - 0.1 * i as f64, 0.04 + 0.03 * i as f64, 0.3 + 0.15 * i as f64);
        let analytic = oracle::price_call(p, x, nu0, tau, 1.0).unwrap();
        let spec = McSpec {
            paths: 1_000_000,
            steps_per_year: 252,
            scheme: McScheme::FullTruncationEuler,
            seed: 9_000 + i as u64,
        };
        let mc = oracle::price_call_mc(p, x, nu0, tau, 1.0, &spec).unwrap();
        let dev = (analytic - mc.mean).abs() / mc.std_err;
        worst_dev = worst_dev.max(dev);

        let put = oracle::price_put(p, x, nu0, tau, 1.0).unwrap();
        let parity = (analytic - put - (x.exp() - (-p.r * tau).exp())).abs();
        worst_parity = worst_parity.max(parity);
    }
    report(
        "2-oracle-mc-parity",
        worst_dev <= 3.0 && worst_parity <= 1e-8,
        &format!("max |analytic - mc| = {worst_dev:.2} stderr (tol 3), parity {worst_parity:.1e} (tol 1e-8)"),
        t0,
    );
}

#[test]
fn criterion_3_exact_solution_residual() {
    let t0 = Instant::now();
    let bounds = DomainBounds::default();
    let solution = DiscountedForwardSolution;
    let draws = eval::draw_params(20, 31, &bounds).unwrap();
    let mut worst = 0.0f64;
    for p in &draws {
        for ix in 0..50 {
            let x = -2.0 + 4.0 * ix as f64 / 49.0;
            for inu in 0..50 {
                let nu = 0.01 + 0.39 * inu as f64 / 49.0;
                for itau in 0..10 {
                    let tau = itau as f64 / 9.0;
                    let d = DomainPoint::new(x, nu, tau);
                    let jet = solution.jet(p, &d).unwrap();
                    worst = worst.max(physics::residual(p, &d, &jet).abs());
                }
            }
        }
    }
    report(
        "3-exact-solution",
        worst < 1e-12,
        &format!("max |R| over 50x50x10 grid x 20 draws = {worst:.2e} (tol 1e-12)"),
        t0,
    );
}

#[test]
fn criterion_4_autodiff_fidelity() {
    let t0 = Instant::now();
    let bounds = DomainBounds::default();
    let model = deepsvm::init_model(
        deepsvm::MlpSpec::new(5, 64, 2, 64),
        deepsvm::MlpSpec::new(3, 64, 2, 64),
        bounds,
        41,
    )
    .unwrap();
    let pts = grad_check_points(&bounds, 100, 1e-3, 7);
    let jet_report = grad_check(&model, &pts, 1e-3).unwrap();

    // 20 random weight directions of the total loss
    let mut sampler = Sampler::new(bounds, 2.0, 11).unwrap();
    let interior = sampler.sample_interior(128).unwrap();
    let atm = sampler.sample_atm(64).unwrap();
    let boundary = sampler.sample_boundary(64).unwrap();
    let batch = TrainBatch {
        interior: &interior,
        atm: &atm,
        boundary: &boundary,
    };
    let weights = LossWeights::default();
    let n = model.params_flat().len();
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    let mut worst_dir = 0.0f64;
    for _ in 0..20 {
        let dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm: f64 = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let dir: Vec<f64> = dir.iter().map(|v| v / norm).collect();
        let (analytic, numeric) =
            directional_loss_check(&model, &batch, &weights, 128, &dir, 1e-4).unwrap();
        let rel = (analytic - numeric).abs() / numeric.abs().max(1e-10);
        worst_dir = worst_dir.max(rel);
    }
    report(
        "4-autodiff-fidelity",
        jet_report.max_rel_err() < 1e-4 && worst_dir < 1e-4,
        &format!(
            "jets {:.2e}, 20 weight directions {:.2e} (tol 1e-4)",
            jet_report.max_rel_err(),
            worst_dir
        ),
        t0,
    );
}

#[test]
fn criterion_5_ansatz_invariants() {
    let t0 = Instant::now();
    let bounds = DomainBounds::default();
    let model = deepsvm::init_model(
        deepsvm::MlpSpec::new(5, 64, 2, 64),
        deepsvm::MlpSpec::new(3, 64, 2, 64),
        bounds,
        51,
    )
    .unwrap();
    let mut sampler = Sampler::new(bounds, 2.0, 52).unwrap();
    let pts = sampler.sample_interior(100_000).unwrap();
    let mut floor_ok = true;
    let mut terminal_ok = true;
    for cp in &pts {
        let u = model.u_pred(&cp.params, &cp.point).unwrap();
        floor_ok &= u >= payoff(cp.point.x);
        let d0 = DomainPoint::new(cp.point.x, cp.point.nu, 0.0);
        // exact equality: the correction term vanishes identically
        terminal_ok &= model.u_pred(&cp.params, &d0).unwrap() == payoff(cp.point.x);
    }
    report(
        "5-ansatz-invariants",
        floor_ok && terminal_ok,
        &format!(
            "intrinsic floor {} / terminal exactness {} at 1e5 points",
            floor_ok, terminal_ok
        ),
        t0,
    );
}

/// Price-error grid shared by criteria 6 and 7: `|x| <= 1`, `tau` in
/// `[0.1, 1]`, three seeded parameter draws, a few variance slices.
fn smoke_price_errors(model: &deepsvm::DeepOnet) -> Vec<f64> {
    let bounds = DomainBounds::default();
    let draws = eval::draw_params(3, 777, &bounds).unwrap();
    let mut errs = Vec::new();
    for p in &draws {
        for i in 0..21 {
            let x = -1.0 + 2.0 * i as f64 / 20.0;
            for nu0 in [0.04, 0.12, 0.2] {
                for tau in [0.1, 0.325, 0.55, 0.775, 1.0] {
                    let d = DomainPoint::new(x, nu0, tau);
                    let model_u = model.value(p, &d).unwrap();
                    let oracle_u = oracle::price_call(p, x, nu0, tau, 1.0).unwrap();
                    errs.push((model_u - oracle_u).abs());
                }
            }
        }
    }
    errs
}

#[test]
fn criterion_6_desk_scale_smoke() {
    let t0 = Instant::now();
    let run = smoke_run();
    let ratio = run.outcome.initial_loss.total / run.outcome.final_loss.total;

    let mut errs = smoke_price_errors(&run.outcome.model);
    errs.sort_by(|a, b| a.total_cmp(b));
    let mae = errs.iter().sum::<f64>() / errs.len() as f64;
    let median = errs[errs.len() / 2];
    report(
        "6-desk-scale-smoke",
        ratio >= 100.0 && mae <= 1e-2 && median <= 5e-3,
        &format!(
            "loss reduction {ratio:.0}x (gate 100x), price MAE {mae:.3e} (gate 1e-2), median {median:.3e} (gate 5e-3)"
        ),
        t0,
    );
}

#[test]
fn criterion_7_greeks_sanity() {
    let t0 = Instant::now();
    let run = smoke_run();
    let bounds = DomainBounds::default();
    let draws = eval::draw_params(3, 777, &bounds).unwrap();
    let mut worst = 0.0f64;
    let mut atm_worst = 0.0f64;
    for p in &draws {
        for i in 0..14 {
            let magnitude = 0.2 + 1.3 * i as f64 / 13.0;
            for x in [magnitude, -magnitude] {
                let d = DomainPoint::new(x, 0.09, 0.5);
                let jet = run.outcome.model.jet(p, &d).unwrap();
                let model_delta = delta_from_jet(&jet, x);
                let oracle_delta = oracle::delta_oracle(p, x, 0.09, 0.5).unwrap();
                worst = worst.max((model_delta - oracle_delta).abs());
            }
        }
        // the ATM band is reported but not gated
        for x in [-0.04, 0.0, 0.04] {
            let d = DomainPoint::new(x, 0.09, 0.5);
            let jet = run.outcome.model.jet(p, &d).unwrap();
            let model_delta = delta_from_jet(&jet, x);
            let oracle_delta = oracle::delta_oracle(p, x, 0.09, 0.5).unwrap();
            atm_worst = atm_worst.max((model_delta - oracle_delta).abs());
        }
    }
    println!("    (atm band |x| <= 0.05 delta error {atm_worst:.3}; reported, not gated)");
    report(
        "7-greeks-sanity",
        worst <= 0.05,
        &format!("max |delta - oracle| = {worst:.3} over |x| in [0.2, 1.5], tau 0.5 (gate 0.05)"),
        t0,
    );
}

#[test]
fn criterion_8_determinism() {
    let t0 = Instant::now();
    let run = smoke_run();
    let out_dir = std::env::temp_dir().join("deepsvm_acceptance_run_b");
    let _ = std::fs::remove_dir_all(&out_dir);
    let second = train(&smoke_config(), Some(&out_dir)).expect("second smoke run");

    let mut identical = true;
    for name in ["checkpoint_final.ckpt", "checkpoint_stage1.ckpt", "train_log.csv"] {
        let a = std::fs::read(run.out_dir.join(name)).unwrap();
        let b = std::fs::read(out_dir.join(name)).unwrap();
        identical &= a == b;
    }

    // adaptive-replacement events exactly on schedule, sizes preserved
    let cfg = smoke_config();
    let rar_steps: Vec<u64> = second
        .log
        .records
        .iter()
        .filter(|r| r.rar_event)
        .map(|r| r.step)
        .collect();
    let expected: Vec<u64> = (1..)
        .map(|k| k * cfg.rar_interval)
        .take_while(|s| *s < cfg.adam_steps)
        .collect();
    let schedule_ok = rar_steps == expected;
    let size_ok = second.sets.interior.len() == cfg.interior_count;
    report(
        "8-determinism",
        identical && schedule_ok && size_ok,
        &format!(
            "artifacts bit-identical {identical}, rar on schedule {schedule_ok} ({} events), interior size {}",
            rar_steps.len(),
            second.sets.interior.len()
        ),
        t0,
    );
}

#[test]
fn criterion_9_schedule_arithmetic() {
    let t0 = Instant::now();
    let mut ok = true;
    for (step, expect) in [
        (0u64, 1e-4),
        (1999, 1e-4),
        (2000, 5e-5),
        (4000, 2.5e-5),
        (9999, 1e-4 * 0.5f64.powi(4)),
    ] {
        ok &= training::lr_schedule(step, 1e-4, 0.5, 2000) == expect;
    }
    report(
        "9-schedule-arithmetic",
        ok,
        "lr(0), lr(1999), lr(2000), lr(4000), lr(9999) match the closed form",
        t0,
    );
}

/// The production profile targets a total loss of 1e-4 or below. It is a
/// long CPU run and deliberately excluded from CI; run it explicitly with
/// `cargo test --release --test acceptance -- --ignored optional_full_scale`.
#[test]
#[ignore = "long run; not part of CI"]
fn optional_full_scale_long_run() {
    let cfg = TrainConfig::default();
    let outcome = train(&cfg, None).expect("full-scale training");
    assert!(
        outcome.final_loss.total <= 1e-4,
        "full-scale total loss {} above 1e-4",
        outcome.final_loss.total
    );
}

#[test]
fn smoke_seed_stream_separation() {
    // the sub-streams feeding weights, sampling and batching must differ
    let s: Vec<u64> = (0..4).map(|t| sub_seed(smoke_config().seed, t)).collect();
    let mut dedup = s.clone();
    dedup.sort_unstable();
    dedup.dedup();
    assert_eq!(dedup.len(), s.len());
}
