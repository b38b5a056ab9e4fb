//! Semi-analytic Heston pricing and Greeks, cross-checked against the
//! Black-Scholes degenerate limit and a Monte Carlo estimate.
//!
//! ```bash
//! cargo run --release --example oracle_pricing
//! ```

use deepsvm::domain::HestonParams;
use deepsvm::oracle::{self, McScheme, McSpec};

fn main() {
    let p = HestonParams::new(2.0, 0.09, 0.3, -0.7, 0.03);
    let (nu0, tau, strike) = (0.09, 0.5, 100.0);

    println!("call prices across moneyness (K = {strike}):");
    for x in [-0.4, -0.2, 0.0, 0.2, 0.4] {
        let call = oracle::price_call(&p, x, nu0, tau, strike).unwrap();
        let put = oracle::price_put(&p, x, nu0, tau, strike).unwrap();
        let delta = oracle::delta_oracle(&p, x, nu0, tau).unwrap();
        let gamma = oracle::gamma_oracle(&p, x, nu0, tau, strike).unwrap();
        let spot = strike * x.exp();
        let parity = call - put - (spot - strike * (-p.r * tau).exp());
        println!(
            "  x {x:5.2} (S {spot:7.2}): call {call:8.4}  put {put:8.4}  \
             delta {delta:.4}  gamma {gamma:.6}  parity gap {parity:.1e}"
        );
    }

    // vanishing vol-of-vol reduces to Black-Scholes with vol sqrt(theta)
    let degenerate = HestonParams::new(3.0, 0.04, 1e-4, -0.5, 0.02);
    let heston = oracle::price_call(&degenerate, 0.0, 0.04, 1.0, 1.0).unwrap();
    let bs = oracle::bs_price(1.0, 1.0, 0.02, 0.2, 1.0);
    println!("\ndegenerate limit: heston {heston:.8} vs black-scholes {bs:.8}");

    // Monte Carlo agreement (per-path random streams, thread-count invariant)
    let spec = McSpec {
        paths: 200_000,
        steps_per_year: 252,
        scheme: McScheme::FullTruncationEuler,
        seed: 42,
    };
    let analytic = oracle::price_call(&p, 0.1, nu0, tau, strike).unwrap();
    let mc = oracle::price_call_mc(&p, 0.1, nu0, tau, strike, &spec).unwrap();
    println!(
        "monte carlo:      analytic {analytic:.4} vs mc {:.4} +- {:.4} ({:.1} stderr apart)",
        mc.mean,
        mc.std_err,
        (analytic - mc.mean).abs() / mc.std_err
    );
}
