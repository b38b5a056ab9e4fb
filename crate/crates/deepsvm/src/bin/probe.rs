// scratch: grad_check robustness across many seeds
use deepsvm::autodiff::{grad_check, grad_check_points};
use deepsvm::domain::DomainBounds;
use deepsvm::network::{init_model, MlpSpec};

fn main() {
    let bounds = DomainBounds::default();
    let mut worst = 0.0f64;
    for seed in 0..12u64 {
        let m = init_model(
            MlpSpec::new(5, 32, 2, 32),
            MlpSpec::new(3, 32, 2, 32),
            bounds,
            seed * 13 + 1,
        )
        .unwrap();
        let pts = grad_check_points(&bounds, 100, 1e-3, seed);
        let rep = grad_check(&m, &pts, 1e-3).unwrap();
        worst = worst.max(rep.max_rel_err());
    }
    println!("worst max-rel-err over 12 seeds: {worst:.3e} (gate 1e-4)");
}
