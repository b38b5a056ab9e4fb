// scratch tuning harness; removed before release
use deepsvm::domain::{DomainBounds, DomainPoint};
use deepsvm::eval::draw_params;
use deepsvm::oracle;
use deepsvm::training::{train, TrainConfig};
use deepsvm::PriceSurface;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mut cfg = TrainConfig::desk_scale();
    for a in &args[1..] {
        let (k, v) = a.split_once('=').unwrap();
        match k {
            "adam" => cfg.adam_steps = v.parse().unwrap(),
            "lbfgs" => cfg.lbfgs_iters = v.parse().unwrap(),
            "lr0" => cfg.lr0 = v.parse().unwrap(),
            "decay" => cfg.lr_decay_interval = v.parse().unwrap(),
            "batch" => cfg.batch_size = v.parse().unwrap(),
            "interior" => cfg.interior_count = v.parse().unwrap(),
            "rar_int" => cfg.rar_interval = v.parse().unwrap(),
            "rar_cand" => cfg.rar_candidates = v.parse().unwrap(),
            "rar_k" => cfg.rar_top_k = v.parse().unwrap(),
            "seed" => cfg.seed = v.parse().unwrap(),
            "atm" => cfg.atm_count = v.parse().unwrap(),
            "lmax" => cfg.lambda_max = v.parse().unwrap(),
            "width" => cfg.hidden_width = v.parse().unwrap(),
            "depth" => cfg.hidden_depth = v.parse().unwrap(),
            "p" => cfg.embedding_width = v.parse().unwrap(),
            _ => panic!("unknown {k}"),
        }
    }
    println!("cfg: {cfg:?}");
    let t0 = Instant::now();
    let out = train(&cfg, Some(std::path::Path::new("/tmp/tuned"))).unwrap();
    println!(
        "trained in {:.0} s; loss {:.3e} -> {:.3e} (ratio {:.0}x), stage2 {:?}",
        t0.elapsed().as_secs_f64(),
        out.initial_loss.total,
        out.final_loss.total,
        out.initial_loss.total / out.final_loss.total,
        out.stage2_status
    );
    // loss trace summary
    let recs = &out.log.records;
    for probe in [0, 250, 500, 1000, 1500, 1999] {
        if let Some(r) = recs.iter().find(|r| r.step == probe as u64) {
            println!(
                "  step {:5} stage {} lr {:.1e}: total {:.3e} (phys {:.2e} bound {:.2e} atm {:.2e})",
                r.step, r.stage, r.lr, r.total, r.l_phys, r.l_bound, r.l_atm
            );
        }
    }
    if let Some(r) = recs.last() {
        println!(
            "  last  {:5} stage {}: total {:.3e}",
            r.step, r.stage, r.total
        );
    }

    // criterion-6 style MAE evaluation
    let bounds = DomainBounds::default();
    let mus = draw_params(3, 777, &bounds).unwrap();
    let mut errs = Vec::new();
    let mut worst = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for p in &mus {
        for i in 0..21 {
            let x = -1.0 + 2.0 * i as f64 / 20.0;
            for nu0 in [0.04, 0.12, 0.2] {
                for tau in [0.1, 0.325, 0.55, 0.775, 1.0] {
                    let d = DomainPoint::new(x, nu0, tau);
                    let model_u = out.model.value(p, &d).unwrap();
                    let oracle_u = oracle::price_call(p, x, nu0, tau, 1.0).unwrap();
                    let e = (model_u - oracle_u).abs();
                    if e > worst.0 {
                        worst = (e, x, nu0, tau);
                    }
                    errs.push(e);
                }
            }
        }
    }
    errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mae = errs.iter().sum::<f64>() / errs.len() as f64;
    let med = errs[errs.len() / 2];
    println!(
        "price error over |x|<=1, tau in [0.1,1]: mae {mae:.4e} (gate 1e-2), median {med:.4e} (gate 5e-3), max {:.3e} at x={:.2} nu0={:.2} tau={:.2}",
        worst.0, worst.1, worst.2, worst.3
    );
    // criterion-7 delta check
    let mut dmax = 0.0f64;
    for p in &mus {
        for i in 0..14 {
            let ax = 0.2 + 1.3 * i as f64 / 13.0;
            for x in [ax, -ax] {
                let d = DomainPoint::new(x, 0.09, 0.5);
                let jet = out.model.jet(p, &d).unwrap();
                let md = deepsvm::eval::delta_from_jet(&jet, x);
                let od = oracle::delta_oracle(p, x, 0.09, 0.5).unwrap();
                dmax = dmax.max((md - od).abs());
            }
        }
    }
    println!("delta error |x| in [0.2,1.5], tau 0.5: max {dmax:.4e} (gate 0.05)");
}
