//! Reproducibility contract: two runs with the same seed and config write
//! byte-identical checkpoints and logs, regardless of how the work is
//! scheduled across threads.
//!
//! ```bash
//! cargo run --release --example deterministic_training
//! ```

use deepsvm::training::{train, TrainConfig};

fn run(dir: &std::path::Path) {
    let cfg = TrainConfig {
        hidden_width: 16,
        hidden_depth: 2,
        embedding_width: 12,
        adam_steps: 120,
        lr0: 2e-3,
        lr_decay_interval: 60,
        batch_size: 128,
        rar_interval: 40,
        rar_candidates: 400,
        rar_top_k: 100,
        interior_count: 1_500,
        atm_count: 128,
        boundary_count: 64,
        boundary_augment: 64,
        lbfgs_iters: 20,
        chunk_size: 128,
        seed: 99,
        ..TrainConfig::desk_scale()
    };
    train(&cfg, Some(dir)).unwrap();
}

fn main() {
    let base = std::env::temp_dir().join("deepsvm_determinism");
    let (a, b) = (base.join("run_a"), base.join("run_b"));
    run(&a);
    run(&b);
    for name in ["checkpoint_final.ckpt", "checkpoint_stage1.ckpt", "train_log.csv"] {
        let bytes_a = std::fs::read(a.join(name)).unwrap();
        let bytes_b = std::fs::read(b.join(name)).unwrap();
        println!(
            "{name}: {} bytes, identical across runs: {}",
            bytes_a.len(),
            bytes_a == bytes_b
        );
        assert_eq!(bytes_a, bytes_b);
    }
    println!("bit-for-bit reproducible.");
}
