//! Residual-map diagnostics: squared PDE residual over an `(x, nu)` grid,
//! first for the exact discounted-forward solution (vanishing residual,
//! which calibrates the harness) and then for a quickly trained surrogate.
//!
//! ```bash
//! cargo run --release --example residual_map
//! ```

use deepsvm::domain::DomainBounds;
use deepsvm::eval::{residual_map_csv, residual_map_param_avg, residual_map_tau_avg};
use deepsvm::physics::DiscountedForwardSolution;
use deepsvm::training::{train, TrainConfig};

fn main() {
    let bounds = DomainBounds::default();

    // mode A with the injected exact solution: mean R^2 is ~0 everywhere
    let cells = residual_map_param_avg(&DiscountedForwardSolution, &bounds, 31, 0.5, 4, 9).unwrap();
    let max_r2 = cells.iter().map(|c| c.mean_r2).fold(0.0, f64::max);
    println!("analytic injection: {} cells, max mean R^2 = {max_r2:.2e}", cells.len());

    let cfg = TrainConfig {
        hidden_width: 24,
        hidden_depth: 2,
        embedding_width: 16,
        adam_steps: 250,
        lr0: 2e-3,
        lr_decay_interval: 100,
        batch_size: 256,
        rar_interval: 75,
        rar_candidates: 1_000,
        rar_top_k: 300,
        interior_count: 3_000,
        atm_count: 256,
        boundary_count: 128,
        boundary_augment: 128,
        lbfgs_iters: 30,
        chunk_size: 256,
        seed: 5,
        ..TrainConfig::desk_scale()
    };
    let model = train(&cfg, None).unwrap().model;

    // mode A: fixed maturity slices averaged over parameter draws
    let out_dir = std::env::temp_dir().join("deepsvm_residual_maps");
    std::fs::create_dir_all(&out_dir).unwrap();
    for tau in [0.1, 0.5, 1.0] {
        let cells = residual_map_param_avg(&model, &bounds, 41, tau, 4, 9).unwrap();
        let hot = cells
            .iter()
            .max_by(|a, b| a.mean_r2.total_cmp(&b.mean_r2))
            .unwrap();
        let path = out_dir.join(format!("map_tau_{tau:.1}.csv"));
        std::fs::write(&path, residual_map_csv(&cells)).unwrap();
        println!(
            "tau {tau:.1}: hottest cell at (x {:.2}, nu {:.3}) with mean R^2 = {:.2e} -> {}",
            hot.x,
            hot.nu,
            hot.mean_r2,
            path.display()
        );
    }

    // mode B: one parameter vector, averaged over maturities
    let mu = deepsvm::eval::draw_params(1, 11, &bounds).unwrap()[0];
    let cells = residual_map_tau_avg(&model, &bounds, 41, &mu, 11).unwrap();
    let path = out_dir.join("map_mu0.csv");
    std::fs::write(&path, residual_map_csv(&cells)).unwrap();
    println!("tau-averaged map for one draw -> {}", path.display());
}
