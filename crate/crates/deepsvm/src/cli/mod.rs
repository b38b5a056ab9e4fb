//! Command-line entry points: `train`, `price`, `greeks`, `compare`,
//! `residual-map` and `check`.
//!
//! Exit codes are a stable contract: 0 success, 2 configuration problems,
//! 3 training aborts, 4 domain violations, 5 self-check failures, 1
//! anything else. Environment overrides are limited to `DEEPSVM_SEED` and
//! `DEEPSVM_THREADS`; every other knob lives in the config file or flags.

pub mod config_file;

pub use config_file::{load_config, parse_config, ConfigError};

use crate::autodiff::PriceSurface;
use crate::domain::{DomainError, DomainPoint, HestonParams};
use crate::eval::{self, CompareSpec};
use crate::network::{load_checkpoint, CheckpointError, DeepOnet, NetworkError};
use crate::training::{self, TrainError};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_TRAIN_ABORT: i32 = 3;
pub const EXIT_DOMAIN: i32 = 4;
pub const EXIT_CHECK_FAILED: i32 = 5;

#[derive(Parser, Debug)]
#[command(
    name = "deepsvm",
    about = "Physics-informed neural operator for Heston option pricing",
    version
)]
struct Cli {
    /// Seed override (also DEEPSVM_SEED)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread count (also DEEPSVM_THREADS)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct QueryArgs {
    #[arg(long)]
    kappa: f64,
    #[arg(long)]
    theta: f64,
    #[arg(long)]
    sigma: f64,
    #[arg(long, allow_negative_numbers = true)]
    rho: f64,
    #[arg(long)]
    rate: f64,
    #[arg(long, allow_negative_numbers = true)]
    x: f64,
    #[arg(long)]
    nu0: f64,
    #[arg(long)]
    tau: f64,
    #[arg(long, default_value_t = 1.0)]
    strike: f64,
}

impl QueryArgs {
    fn split(&self) -> (HestonParams, DomainPoint) {
        (
            HestonParams::new(self.kappa, self.theta, self.sigma, self.rho, self.rate),
            DomainPoint::new(self.x, self.nu0, self.tau),
        )
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the two-stage training and write checkpoints plus the step log
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Price one query point with a trained model
    Price {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        query: QueryArgs,
    },
    /// Delta and Gamma of a trained model at one query point
    Greeks {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        query: QueryArgs,
    },
    /// Model-vs-oracle price and Greeks table over x sweeps
    Compare {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 3)]
        n_params: usize,
        #[arg(long, default_value_t = 41)]
        grid: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Squared-residual maps over (x, nu) grids
    #[command(name = "residual-map")]
    ResidualMap {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 101)]
        grid: usize,
        #[arg(long, default_value_t = 3)]
        n_params: usize,
        /// `a`: fixed maturity slices averaged over parameter draws;
        /// `b`: fixed parameters averaged over maturities
        #[arg(long, default_value = "a")]
        mode: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Oracle, autodiff, ansatz and sampler self-tests
    Check {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Checkpoint(_) => EXIT_CONFIG,
            CliError::Train(TrainError::Config(_)) => EXIT_CONFIG,
            CliError::Train(_) => EXIT_TRAIN_ABORT,
            CliError::Domain(_) => EXIT_DOMAIN,
            CliError::Eval(eval::EvalError::Domain(_)) => EXIT_DOMAIN,
            CliError::Eval(_) => 1,
            CliError::Io(_) => 1,
        }
    }
}

fn network_to_cli(e: NetworkError) -> CliError {
    match e {
        NetworkError::Domain(d) => CliError::Domain(d),
        other => CliError::Io(std::io::Error::other(other.to_string())),
    }
}

fn env_u64(name: &str) -> Option<u64> {
    std::env::var(name).ok().and_then(|v| v.parse().ok())
}

fn setup_threads(threads: Option<usize>) {
    let n = threads.or_else(|| env_u64("DEEPSVM_THREADS").map(|v| v as usize));
    if let Some(n) = n {
        // ignore failure: the global pool may already exist (tests)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

fn load_model(path: &PathBuf) -> Result<DeepOnet, CliError> {
    Ok(load_checkpoint(path)?.0)
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn run_command(cli: Cli) -> Result<i32, CliError> {
    setup_threads(cli.threads);
    let seed = cli.seed.or_else(|| env_u64("DEEPSVM_SEED"));
    match cli.command {
        Command::Train { config, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let t0 = std::time::Instant::now();
            let outcome = training::train(&cfg, Some(&out))?;
            println!(
                "stage 1 + stage 2 finished in {:.1} s ({} log rows, stage-2 status {:?})",
                t0.elapsed().as_secs_f64(),
                outcome.log.records.len(),
                outcome.stage2_status
            );
            println!(
                "loss: initial {} -> final {}",
                fmt17(outcome.initial_loss.total),
                fmt17(outcome.final_loss.total)
            );
            println!("artifacts in {}", out.display());
            Ok(EXIT_OK)
        }
        Command::Price { checkpoint, query } => {
            let model = load_model(&checkpoint)?;
            let (p, d) = query.split();
            let u = model.u_pred(&p, &d).map_err(network_to_cli)?;
            println!("u = {}", fmt17(u));
            println!("V = {}", fmt17(query.strike * u));
            Ok(EXIT_OK)
        }
        Command::Greeks { checkpoint, query } => {
            let model = load_model(&checkpoint)?;
            let (p, d) = query.split();
            let jet = model.jet(&p, &d)?;
            println!("delta = {}", fmt17(eval::delta_from_jet(&jet, d.x)));
            println!(
                "gamma = {}",
                fmt17(eval::gamma_from_jet(&jet, d.x, query.strike))
            );
            Ok(EXIT_OK)
        }
        Command::Compare {
            checkpoint,
            n_params,
            grid,
            out,
        } => {
            let model = load_model(&checkpoint)?;
            let spec = CompareSpec {
                n_params,
                grid_n: grid,
                seed: seed.unwrap_or(0),
                ..CompareSpec::default()
            };
            let rows = eval::compare(&model, &spec, &model.bounds.clone())?;
            std::fs::create_dir_all(&out)?;
            let path = out.join("comparison.csv");
            std::fs::write(&path, eval::comparison_csv(&rows))?;
            let s = eval::summarize(&rows);
            println!("rows: {} -> {}", rows.len(), path.display());
            println!(
                "price error: mae {} max {}",
                fmt17(s.all.mae),
                fmt17(s.all.max)
            );
            println!(
                "  atm band (|x| <= 0.05): mae {} max {} ({} rows)",
                fmt17(s.atm_band.mae),
                fmt17(s.atm_band.max),
                s.atm_band.count
            );
            println!(
                "  elsewhere:              mae {} max {} ({} rows)",
                fmt17(s.outside_band.mae),
                fmt17(s.outside_band.max),
                s.outside_band.count
            );
            Ok(EXIT_OK)
        }
        Command::ResidualMap {
            checkpoint,
            grid,
            n_params,
            mode,
            out,
        } => {
            let model = load_model(&checkpoint)?;
            let bounds = model.bounds;
            std::fs::create_dir_all(&out)?;
            match mode.as_str() {
                "a" => {
                    for tau in [0.1, 0.5, 1.0] {
                        let cells = eval::residual_map_param_avg(
                            &model,
                            &bounds,
                            grid,
                            tau,
                            n_params,
                            seed.unwrap_or(0),
                        )?;
                        let path = out.join(format!("residual_map_tau_{tau:.1}.csv"));
                        std::fs::write(&path, eval::residual_map_csv(&cells))?;
                        println!("{} cells -> {}", cells.len(), path.display());
                    }
                }
                "b" => {
                    let params = eval::draw_params(n_params, seed.unwrap_or(0), &bounds)
                        .map_err(eval::EvalError::from)?;
                    for (i, p) in params.iter().enumerate() {
                        let cells = eval::residual_map_tau_avg(&model, &bounds, grid, p, 11)?;
                        let path = out.join(format!("residual_map_mu{i}.csv"));
                        std::fs::write(&path, eval::residual_map_csv(&cells))?;
                        println!(
                            "mu{i} = (kappa {:.4}, theta {:.4}, sigma {:.4}, rho {:.4}, r {:.4}) -> {}",
                            p.kappa,
                            p.theta,
                            p.sigma,
                            p.rho,
                            p.r,
                            path.display()
                        );
                    }
                }
                other => {
                    return Err(CliError::Config(ConfigError::BadValue {
                        line: 0,
                        key: "mode".into(),
                        value: other.into(),
                        what: "expected `a` or `b`".into(),
                    }))
                }
            }
            Ok(EXIT_OK)
        }
        Command::Check { checkpoint } => {
            let outcomes = eval::run_self_checks(checkpoint.as_deref(), seed.unwrap_or(0));
            let mut all_ok = true;
            for o in &outcomes {
                println!("{o}");
                all_ok &= o.passed;
            }
            Ok(if all_ok { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
    }
}

/// Parses arguments from the environment and runs; returns the process
/// exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own message; --help/--version are successes
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run_command(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
