//! DeepSVM: a physics-informed DeepONet surrogate for the Heston pricing
//! PDE over its full parameter space, with independent semi-analytic and
//! Monte Carlo oracles for validation.
//!
//! The crate is organized around the pipeline:
//!
//! - [`domain`]: parameters, coordinates, bounds, payoff and normalization
//! - [`sampling`]: Sobol collocation sets, tanh warp, adaptive replacement
//! - [`network`]: branch/trunk MLPs, the hard-constrained ansatz,
//!   checkpoints
//! - [`autodiff`]: forward jets of the six operator partials, reverse-mode
//!   weight gradients, finite-difference verification
//! - [`physics`]: the pricing operator, residual, and loss assembly
//! - [`training`]: the Adam + adaptive-refinement stage and the L-BFGS
//!   refinement stage
//! - [`oracle`]: Fourier-based semi-analytic prices and Greeks, Monte Carlo
//!   cross-checks
//! - [`eval`]: comparison tables, residual maps and the self-check suite
//!   behind the CLI
//!
//! Runnable examples live under `examples/`; the `deepsvm` binary exposes
//! the `train`, `price`, `greeks`, `compare`, `residual-map` and `check`
//! subcommands.

pub mod autodiff;
pub mod cli;
pub mod domain;
pub mod eval;
pub mod network;
pub mod oracle;
pub mod physics;
pub mod sampling;
pub mod training;

pub use autodiff::{forward_jet, grad_check, Jet2, PriceSurface};
pub use domain::{DomainBounds, DomainPoint, HestonParams};
pub use network::{init_model, load_checkpoint, save_checkpoint, DeepOnet, MlpSpec};
pub use physics::{heston_operator, residual, LossReport, LossWeights};
pub use sampling::{CollocationPoint, CollocationSet, Sampler, SobolEngine};
pub use training::{train, TrainConfig, TrainLog, TrainOutcome};
