//! Prices and Greeks from a freshly trained miniature surrogate, next to
//! the semi-analytic oracle values. With a tiny network and a short
//! schedule the match is loose; the point is the full query pipeline:
//! ansatz evaluation, jet-based Delta and Gamma, and strike denormalization.
//!
//! ```bash
//! cargo run --release --example price_and_greeks
//! ```

use deepsvm::domain::{DomainPoint, HestonParams};
use deepsvm::eval::{delta_from_jet, gamma_from_jet};
use deepsvm::oracle;
use deepsvm::training::{train, TrainConfig};
use deepsvm::PriceSurface;

fn main() {
    let cfg = TrainConfig {
        hidden_width: 32,
        hidden_depth: 2,
        embedding_width: 24,
        adam_steps: 400,
        lr0: 2e-3,
        lr_decay: 0.5,
        lr_decay_interval: 150,
        batch_size: 512,
        rar_interval: 100,
        rar_candidates: 2_000,
        rar_top_k: 600,
        interior_count: 6_000,
        atm_count: 512,
        boundary_count: 256,
        boundary_augment: 256,
        lbfgs_iters: 60,
        chunk_size: 512,
        seed: 3,
        ..TrainConfig::desk_scale()
    };
    println!("training a miniature surrogate ({} s scale)...", 60);
    let outcome = train(&cfg, None).unwrap();
    let model = outcome.model;

    let p = HestonParams::new(2.0, 0.09, 0.3, -0.7, 0.03);
    let (nu0, tau, strike) = (0.09, 0.5, 100.0);
    println!("\n   x |   model V |  oracle V |  m-delta |  o-delta");
    for x in [-0.5, -0.25, 0.0, 0.25, 0.5] {
        let d = DomainPoint::new(x, nu0, tau);
        let jet = model.jet(&p, &d).unwrap();
        let v_model = strike * jet.u;
        let v_oracle = oracle::price_call(&p, x, nu0, tau, strike).unwrap();
        let d_model = delta_from_jet(&jet, x);
        let d_oracle = oracle::delta_oracle(&p, x, nu0, tau).unwrap();
        println!("{x:5.2} | {v_model:9.4} | {v_oracle:9.4} | {d_model:8.4} | {d_oracle:8.4}");
        let _ = gamma_from_jet(&jet, x, strike);
    }

    // the terminal slice is exact by construction, for any weights
    let d0 = DomainPoint::new(0.3, nu0, 0.0);
    let v0 = strike * model.u_pred(&p, &d0).unwrap();
    println!(
        "\nterminal exactness: V(tau=0, x=0.3) = {v0:.6} vs K*payoff = {:.6}",
        strike * deepsvm::domain::payoff(0.3)
    );
}
