//! Two-stage optimization: Adam with exponential learning-rate decay and
//! periodic residual-based adaptive replacement of interior points, then a
//! full-batch L-BFGS refinement on an augmented boundary set.

mod adam;
pub mod lbfgs;

pub use adam::{lr_schedule, AdamState};
pub use lbfgs::{LbfgsOutcome, LbfgsParams, LbfgsStatus};

use crate::autodiff::{backward_params, AutodiffError, TrainBatch};
use crate::domain::DomainBounds;
use crate::network::{
    init_model, save_checkpoint, CheckpointError, CheckpointMeta, DeepOnet, MlpSpec, NetworkError,
};
use crate::physics::{self, LossReport, LossWeights};
use crate::sampling::{rar_replace, CollocationPoint, CollocationSet, Sampler, SamplingError};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::cell::RefCell;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite gradient at step {step}; aborting")]
    NonFiniteGradient { step: u64 },
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Full two-stage schedule. The default is the production configuration;
/// [`TrainConfig::desk_scale`] is the reduced profile used by the smoke
/// tests and examples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub hidden_width: usize,
    pub hidden_depth: usize,
    pub embedding_width: usize,
    pub adam_steps: u64,
    pub lr0: f64,
    pub lr_decay: f64,
    pub lr_decay_interval: u64,
    pub batch_size: usize,
    pub rar_interval: u64,
    pub rar_candidates: usize,
    pub rar_top_k: usize,
    pub interior_count: usize,
    pub atm_count: usize,
    pub boundary_count: usize,
    pub boundary_augment: usize,
    pub lbfgs_memory: usize,
    pub lbfgs_iters: usize,
    pub lbfgs_tol: f64,
    pub lambda_b: f64,
    pub lambda_a: f64,
    pub lambda_max: f64,
    pub alpha_x: f64,
    pub chunk_size: usize,
    pub checkpoint_interval: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_width: 128,
            hidden_depth: 4,
            embedding_width: 128,
            adam_steps: 10_000,
            lr0: 1e-4,
            lr_decay: 0.5,
            lr_decay_interval: 2_000,
            batch_size: 20_000,
            rar_interval: 500,
            rar_candidates: 50_000,
            rar_top_k: 20_000,
            interior_count: 200_000,
            atm_count: 4_096,
            boundary_count: 2_048,
            boundary_augment: 2_048,
            lbfgs_memory: 20,
            lbfgs_iters: 5_000,
            lbfgs_tol: 1e-12,
            lambda_b: 1.0,
            lambda_a: 1.0,
            lambda_max: 0.1,
            alpha_x: 2.0,
            chunk_size: 4_096,
            checkpoint_interval: 1_000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Reduced profile sized for a workstation smoke run: width 64, depth
    /// 2, embedding 64, 20k interior points, 1024 ATM, 512 (+512) boundary,
    /// 2000 Adam steps with RAR every 250 (5000 candidates, keep 2000),
    /// then 200 L-BFGS iterations.
    pub fn desk_scale() -> Self {
        Self {
            hidden_width: 64,
            hidden_depth: 2,
            embedding_width: 64,
            adam_steps: 2_000,
            lr0: 1e-3,
            lr_decay: 0.5,
            lr_decay_interval: 500,
            batch_size: 1_024,
            rar_interval: 250,
            rar_candidates: 5_000,
            rar_top_k: 2_000,
            interior_count: 20_000,
            atm_count: 1_024,
            boundary_count: 512,
            boundary_augment: 512,
            lbfgs_iters: 200,
            chunk_size: 512,
            ..Self::default()
        }
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            lambda_b: self.lambda_b,
            lambda_a: self.lambda_a,
            lambda_max: self.lambda_max,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let positive = [
            ("hidden_width", self.hidden_width),
            ("hidden_depth", self.hidden_depth),
            ("embedding_width", self.embedding_width),
            ("batch_size", self.batch_size),
            ("rar_candidates", self.rar_candidates),
            ("interior_count", self.interior_count),
            ("atm_count", self.atm_count),
            ("boundary_count", self.boundary_count),
            ("lbfgs_memory", self.lbfgs_memory),
            ("chunk_size", self.chunk_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(TrainError::Config(format!("{name} must be positive")));
            }
        }
        if self.rar_top_k > self.rar_candidates {
            return Err(TrainError::Config(format!(
                "rar_top_k {} exceeds rar_candidates {}",
                self.rar_top_k, self.rar_candidates
            )));
        }
        if self.rar_top_k > self.interior_count {
            return Err(TrainError::Config(format!(
                "rar_top_k {} exceeds interior_count {}",
                self.rar_top_k, self.interior_count
            )));
        }
        if self.batch_size > self.interior_count {
            return Err(TrainError::Config(format!(
                "batch_size {} exceeds interior_count {}",
                self.batch_size, self.interior_count
            )));
        }
        if self.boundary_count % 2 != 0 || self.boundary_augment % 2 != 0 {
            return Err(TrainError::Config(
                "boundary counts must be even (half per side)".into(),
            ));
        }
        if !(self.lr0 > 0.0) || !(self.lr_decay > 0.0) || self.lr_decay_interval == 0 {
            return Err(TrainError::Config("invalid learning-rate schedule".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        lr_schedule(step, self.lr0, self.lr_decay, self.lr_decay_interval)
    }

    pub fn branch_spec(&self) -> MlpSpec {
        MlpSpec::new(5, self.hidden_width, self.hidden_depth, self.embedding_width)
    }

    pub fn trunk_spec(&self) -> MlpSpec {
        MlpSpec::new(3, self.hidden_width, self.hidden_depth, self.embedding_width)
    }
}

/// splitmix64 over (seed, tag); gives independent sub-streams for weights,
/// sampling, victim selection and batch shuffling.
pub fn sub_seed(master: u64, tag: u64) -> u64 {
    let mut z = master
        .wrapping_add(tag.wrapping_mul(0x9e3779b97f4a7c15))
        .wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainLogRecord {
    pub step: u64,
    pub stage: u8,
    pub lr: f64,
    pub l_phys: f64,
    pub l_bound: f64,
    pub l_atm: f64,
    pub total: f64,
    pub rar_event: bool,
    /// wall-clock seconds for the step; kept out of the serialized log so
    /// log files are bit-identical across reruns
    pub wall_s: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainLog {
    pub records: Vec<TrainLogRecord>,
}

pub const TRAIN_LOG_HEADER: &str = "step,stage,lr,l_phys,l_bound,l_atm,total,rar_event";

impl TrainLog {
    pub fn push(&mut self, rec: TrainLogRecord) {
        if let Some(last) = self.records.last() {
            debug_assert!(rec.step > last.step, "steps must increase");
        }
        self.records.push(rec);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRAIN_LOG_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
                r.step,
                r.stage,
                r.lr,
                r.l_phys,
                r.l_bound,
                r.l_atm,
                r.total,
                u8::from(r.rar_event)
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), std::io::Error> {
        std::fs::write(path, self.to_csv())
    }

    pub fn total_wall_s(&self) -> f64 {
        self.records.iter().map(|r| r.wall_s).sum()
    }
}

pub struct TrainOutcome {
    pub model: DeepOnet,
    pub log: TrainLog,
    pub sets: CollocationSet,
    pub initial_loss: LossReport,
    pub final_loss: LossReport,
    pub stage2_status: LbfgsStatus,
}

fn checkpoint_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn maybe_checkpoint(
    out_dir: Option<&Path>,
    model: &DeepOnet,
    meta: &CheckpointMeta,
    name: &str,
) -> Result<(), TrainError> {
    if let Some(dir) = out_dir {
        save_checkpoint(model, meta, &checkpoint_path(dir, name))?;
    }
    Ok(())
}

fn meta_for(model: &DeepOnet, stage: u32, step: u64, loss: &LossReport) -> CheckpointMeta {
    CheckpointMeta {
        seed: model.meta.seed,
        config_hash: model.meta.config_hash,
        stage,
        step,
        losses: [loss.l_phys, loss.l_bound, loss.l_atm, loss.total],
    }
}

/// Stage 1: Adam over shuffled interior mini-batches plus the full ATM and
/// boundary sets, with an adaptive-replacement event every `rar_interval`
/// steps. ATM and boundary sets stay fixed throughout.
pub fn run_stage1(
    cfg: &TrainConfig,
    model: &mut DeepOnet,
    sets: &mut CollocationSet,
    sampler: &mut Sampler,
    log: &mut TrainLog,
    out_dir: Option<&Path>,
) -> Result<(), TrainError> {
    let weights = cfg.weights();
    let mut rng_rar = ChaCha12Rng::seed_from_u64(sub_seed(cfg.seed, 2));
    let mut rng_batch = ChaCha12Rng::seed_from_u64(sub_seed(cfg.seed, 3));
    let mut flat = model.params_flat();
    let mut adam = AdamState::new(flat.len());
    let mut perm: Vec<usize> = (0..sets.interior.len()).collect();
    perm.shuffle(&mut rng_batch);
    let mut cursor = 0usize;
    let mut batch_buf: Vec<CollocationPoint> = Vec::with_capacity(cfg.batch_size);

    for step in 0..cfg.adam_steps {
        let t0 = Instant::now();
        let mut rar_event = false;
        if step > 0 && step % cfg.rar_interval == 0 {
            let candidates = sampler.sample_interior(cfg.rar_candidates)?;
            let residuals = physics::residuals_of(&*model, &candidates, cfg.chunk_size)
                .map_err(|e| match e {
                    physics::PhysicsError::Domain(d) => TrainError::Autodiff(d.into()),
                    other => TrainError::Config(other.to_string()),
                })?;
            rar_replace(sets, &candidates, &residuals, cfg.rar_top_k, &mut rng_rar)?;
            rar_event = true;
        }

        if cursor + cfg.batch_size > perm.len() {
            perm.shuffle(&mut rng_batch);
            cursor = 0;
        }
        batch_buf.clear();
        batch_buf.extend(perm[cursor..cursor + cfg.batch_size].iter().map(|&i| sets.interior[i]));
        cursor += cfg.batch_size;

        let batch = TrainBatch {
            interior: &batch_buf,
            atm: &sets.atm,
            boundary: &sets.boundary,
        };
        let (report, grad) = backward_params(model, &batch, &weights, cfg.chunk_size)?;
        if !grad.is_finite() {
            return Err(TrainError::NonFiniteGradient { step });
        }
        let lr = cfg.lr_at(step);
        adam.step(&mut flat, &grad.to_flat(), lr);
        model.set_params_flat(&flat)?;

        log.push(TrainLogRecord {
            step,
            stage: 1,
            lr,
            l_phys: report.l_phys,
            l_bound: report.l_bound,
            l_atm: report.l_atm,
            total: report.total,
            rar_event,
            wall_s: t0.elapsed().as_secs_f64(),
        });
        if (step + 1) % cfg.checkpoint_interval == 0 && step + 1 < cfg.adam_steps {
            let meta = meta_for(model, 1, step + 1, &report);
            maybe_checkpoint(out_dir, model, &meta, &format!("checkpoint_step_{:06}.ckpt", step + 1))?;
        }
    }
    Ok(())
}

/// Stage 2: augments the boundary set and refines with full-batch L-BFGS.
/// Returns the optimizer outcome; the model holds the refined weights.
pub fn run_stage2(
    cfg: &TrainConfig,
    model: &mut DeepOnet,
    sets: &mut CollocationSet,
    sampler: &mut Sampler,
    log: &mut TrainLog,
) -> Result<LbfgsOutcome, TrainError> {
    let weights = cfg.weights();
    sets.boundary.extend(sampler.sample_boundary(cfg.boundary_augment)?);

    let work = RefCell::new((model.clone(), Vec::<(u64, LossReport)>::new()));
    let failure = RefCell::new(None::<TrainError>);
    let obj = |flat: &[f64]| -> (f64, Vec<f64>) {
        let mut state = work.borrow_mut();
        let (m, reports) = &mut *state;
        if m.set_params_flat(flat).is_err() {
            return (f64::INFINITY, vec![0.0; flat.len()]);
        }
        let batch = TrainBatch {
            interior: &sets.interior,
            atm: &sets.atm,
            boundary: &sets.boundary,
        };
        match backward_params(m, &batch, &weights, cfg.chunk_size) {
            Ok((report, grad)) => {
                reports.push((report.total.to_bits(), report));
                if reports.len() > 64 {
                    reports.remove(0);
                }
                (report.total, grad.to_flat())
            }
            Err(e) => {
                *failure.borrow_mut() = Some(e.into());
                (f64::INFINITY, vec![0.0; flat.len()])
            }
        }
    };

    let base_step = cfg.adam_steps;
    let log_cell = RefCell::new(log);
    let t_stage = RefCell::new(Instant::now());
    let params = LbfgsParams {
        memory: cfg.lbfgs_memory,
        max_iters: cfg.lbfgs_iters,
        rel_tol: cfg.lbfgs_tol,
        ..LbfgsParams::default()
    };
    let outcome = lbfgs::minimize(
        obj,
        model.params_flat(),
        &params,
        |iter, f, _gnorm, step_len| {
            let state = work.borrow();
            let report = state
                .1
                .iter()
                .rev()
                .find(|(bits, _)| *bits == f.to_bits())
                .map(|(_, r)| *r)
                .unwrap_or(LossReport::compose(f, 0.0, 0.0, &weights));
            let mut log = log_cell.borrow_mut();
            let wall = t_stage.borrow().elapsed().as_secs_f64();
            *t_stage.borrow_mut() = Instant::now();
            log.push(TrainLogRecord {
                step: base_step + iter as u64 + 1,
                stage: 2,
                lr: step_len,
                l_phys: report.l_phys,
                l_bound: report.l_bound,
                l_atm: report.l_atm,
                total: f,
                rar_event: false,
                wall_s: wall,
            });
        },
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    model.set_params_flat(&outcome.x)?;
    Ok(outcome)
}

/// End-to-end training: builds the model and point sets from the config
/// seed, runs both stages, and (when `out_dir` is given) writes the
/// checkpoint files and the streamed log.
pub fn train(cfg: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let bounds = DomainBounds::default();
    let mut model = init_model(cfg.branch_spec(), cfg.trunk_spec(), bounds, sub_seed(cfg.seed, 0))?;
    let mut sampler = Sampler::new(bounds, cfg.alpha_x, sub_seed(cfg.seed, 1))?;
    let mut sets = CollocationSet {
        interior: sampler.sample_interior(cfg.interior_count)?,
        atm: sampler.sample_atm(cfg.atm_count)?,
        boundary: sampler.sample_boundary(cfg.boundary_count)?,
    };

    let full_batch = TrainBatch {
        interior: &sets.interior,
        atm: &sets.atm,
        boundary: &sets.boundary,
    };
    let initial_loss = physics::total_loss(&model, &full_batch, &cfg.weights(), cfg.chunk_size)?;

    let mut log = TrainLog::default();
    run_stage1(cfg, &mut model, &mut sets, &mut sampler, &mut log, out_dir)?;
    {
        let stage1_batch = TrainBatch {
            interior: &sets.interior,
            atm: &sets.atm,
            boundary: &sets.boundary,
        };
        let report = physics::total_loss(&model, &stage1_batch, &cfg.weights(), cfg.chunk_size)?;
        let meta = meta_for(&model, 1, cfg.adam_steps, &report);
        maybe_checkpoint(out_dir, &model, &meta, "checkpoint_stage1.ckpt")?;
    }
    let outcome = run_stage2(cfg, &mut model, &mut sets, &mut sampler, &mut log)?;
    let final_batch = TrainBatch {
        interior: &sets.interior,
        atm: &sets.atm,
        boundary: &sets.boundary,
    };
    let final_loss = physics::total_loss(&model, &final_batch, &cfg.weights(), cfg.chunk_size)?;
    let meta = meta_for(&model, 2, cfg.adam_steps + outcome.iterations as u64, &final_loss);
    maybe_checkpoint(out_dir, &model, &meta, "checkpoint_final.ckpt")?;
    if let Some(dir) = out_dir {
        log.write_csv(&dir.join("train_log.csv"))?;
    }
    Ok(TrainOutcome {
        model,
        log,
        sets,
        initial_loss,
        final_loss,
        stage2_status: outcome.status,
    })
}
