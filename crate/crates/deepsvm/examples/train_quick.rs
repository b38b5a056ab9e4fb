//! A miniature end-to-end training run: Adam with periodic adaptive
//! replacement, then L-BFGS refinement. Writes the checkpoint files and
//! the step log. A few minutes of work at most; see `configs/desk.conf`
//! for the smoke-test profile and `configs/full.conf` for the production
//! schedule.
//!
//! ```bash
//! cargo run --release --example train_quick
//! ```

use deepsvm::training::{train, TrainConfig};

fn main() {
    let cfg = TrainConfig {
        hidden_width: 24,
        hidden_depth: 2,
        embedding_width: 16,
        adam_steps: 300,
        lr0: 2e-3,
        lr_decay: 0.5,
        lr_decay_interval: 100,
        batch_size: 256,
        rar_interval: 75,
        rar_candidates: 1_000,
        rar_top_k: 300,
        interior_count: 3_000,
        atm_count: 256,
        boundary_count: 128,
        boundary_augment: 128,
        lbfgs_iters: 40,
        chunk_size: 256,
        seed: 1,
        ..TrainConfig::desk_scale()
    };
    let out_dir = std::env::temp_dir().join("deepsvm_train_quick");
    let t0 = std::time::Instant::now();
    let outcome = train(&cfg, Some(&out_dir)).unwrap();
    println!(
        "trained {} parameters in {:.1} s",
        outcome.model.param_count(),
        t0.elapsed().as_secs_f64()
    );
    println!(
        "total loss: {:.3e} -> {:.3e} ({:.0}x reduction)",
        outcome.initial_loss.total,
        outcome.final_loss.total,
        outcome.initial_loss.total / outcome.final_loss.total
    );
    let rar_steps: Vec<u64> = outcome
        .log
        .records
        .iter()
        .filter(|r| r.rar_event)
        .map(|r| r.step)
        .collect();
    println!("rar events at steps {rar_steps:?}");
    println!(
        "artifacts: {} (checkpoint_final.ckpt, checkpoint_stage1.ckpt, train_log.csv)",
        out_dir.display()
    );
}
