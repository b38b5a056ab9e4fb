//! The built-in verification suite, as run by `deepsvm check`: oracle
//! cross-checks, autodiff fidelity, ansatz invariants and sampler
//! determinism.
//!
//! ```bash
//! cargo run --release --example self_check
//! ```

use deepsvm::eval::run_self_checks;

fn main() {
    let outcomes = run_self_checks(None, 0);
    let mut all_ok = true;
    for o in &outcomes {
        println!("{o}");
        all_ok &= o.passed;
    }
    std::process::exit(if all_ok { 0 } else { 5 });
}
