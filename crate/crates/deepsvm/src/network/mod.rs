//! The DeepONet approximator: branch and trunk MLPs combined by an inner
//! product, wrapped in the hard-constrained ansatz
//! `u = phi(x) + tau * softplus(raw)`, which pins the terminal payoff
//! exactly and keeps the price at or above intrinsic value by construction.

pub mod act;
mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, CheckpointMeta};

use crate::domain::{
    normalize_inputs, payoff, DomainBounds, DomainError, DomainPoint, HestonParams,
};
use act::{gelu, softplus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

pub const BRANCH_INPUT_WIDTH: usize = 5;
pub const TRUNK_INPUT_WIDTH: usize = 3;

#[derive(Error, Debug)]
pub enum NetworkError {
    #[error("invalid mlp spec: {0}")]
    InvalidSpec(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Architecture of one sub-network: GELU hidden layers with identity skips
/// between consecutive equal-width layers, then a linear output layer of
/// width `output_width`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MlpSpec {
    pub input_width: usize,
    pub hidden_width: usize,
    pub hidden_depth: usize,
    pub output_width: usize,
}

impl MlpSpec {
    pub fn new(input_width: usize, hidden_width: usize, hidden_depth: usize, output_width: usize) -> Self {
        Self {
            input_width,
            hidden_width,
            hidden_depth,
            output_width,
        }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.input_width == 0
            || self.hidden_width == 0
            || self.hidden_depth == 0
            || self.output_width == 0
        {
            return Err(NetworkError::InvalidSpec(format!("{self:?} has a zero width")));
        }
        Ok(())
    }

    /// Layer shapes as (rows, cols) pairs: hidden layers then output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = vec![(self.hidden_width, self.input_width)];
        for _ in 1..self.hidden_depth {
            shapes.push((self.hidden_width, self.hidden_width));
        }
        shapes.push((self.output_width, self.hidden_width));
        shapes
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|(r, c)| r * c + r)
            .sum()
    }
}

/// One affine layer, row-major weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl Dense {
    fn glorot(rows: usize, cols: usize, rng: &mut ChaCha12Rng) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let w = (0..rows * cols)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        Self {
            w,
            b: vec![0.0; rows],
            rows,
            cols,
        }
    }

    /// `out = W h + b`
    pub fn affine(&self, h: &[f64], out: &mut [f64]) {
        debug_assert_eq!(h.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.w[i * self.cols..(i + 1) * self.cols];
            let mut acc = self.b[i];
            for (w, x) in row.iter().zip(h) {
                acc += w * x;
            }
            *o = acc;
        }
    }
}

/// MLP with GELU activations; skips on every hidden layer past the first.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub layers: Vec<Dense>,
}

impl Mlp {
    fn init(spec: MlpSpec, rng: &mut ChaCha12Rng) -> Result<Self, NetworkError> {
        spec.validate()?;
        let layers = spec
            .layer_shapes()
            .into_iter()
            .map(|(r, c)| Dense::glorot(r, c, rng))
            .collect();
        Ok(Self { spec, layers })
    }

    /// Value-only forward pass.
    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let depth = self.spec.hidden_depth;
        let mut h = vec![0.0; self.spec.hidden_width];
        let mut z = vec![0.0; self.spec.hidden_width];
        self.layers[0].affine(input, &mut z);
        for (hv, zv) in h.iter_mut().zip(&z) {
            *hv = gelu(*zv);
        }
        for k in 1..depth {
            self.layers[k].affine(&h, &mut z);
            for (hv, zv) in h.iter_mut().zip(&z) {
                *hv += gelu(*zv); // identity skip
            }
        }
        let mut out = vec![0.0; self.spec.output_width];
        self.layers[depth].affine(&h, &mut out);
        out
    }

    pub fn param_count(&self) -> usize {
        self.spec.param_count()
    }
}

/// Immutable model state: branch over the 5 normalized parameters, trunk
/// over the 3 normalized coordinates, shared embedding width, and the
/// normalization bounds it was built with.
#[derive(Clone, Debug, PartialEq)]
pub struct DeepOnet {
    pub branch: Mlp,
    pub trunk: Mlp,
    pub bounds: DomainBounds,
    pub meta: ModelMeta,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelMeta {
    pub seed: u64,
    pub config_hash: u64,
}

fn fnv1a(words: impl IntoIterator<Item = u64>) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for w in words {
        for byte in w.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

fn config_hash(branch: &MlpSpec, trunk: &MlpSpec, bounds: &DomainBounds) -> u64 {
    let mut words = vec![
        branch.input_width as u64,
        branch.hidden_width as u64,
        branch.hidden_depth as u64,
        branch.output_width as u64,
        trunk.input_width as u64,
        trunk.hidden_width as u64,
        trunk.hidden_depth as u64,
        trunk.output_width as u64,
    ];
    for axis in crate::domain::AXES {
        let (min, max) = bounds.range(axis);
        words.push(min.to_bits());
        words.push(max.to_bits());
    }
    fnv1a(words)
}

/// Glorot-uniform initialization from a seeded generator; biases start at
/// zero. Deterministic per seed.
pub fn init_model(
    branch_spec: MlpSpec,
    trunk_spec: MlpSpec,
    bounds: DomainBounds,
    seed: u64,
) -> Result<DeepOnet, NetworkError> {
    bounds.validate()?;
    if branch_spec.input_width != BRANCH_INPUT_WIDTH {
        return Err(NetworkError::ShapeMismatch(format!(
            "branch input width {} != {BRANCH_INPUT_WIDTH}",
            branch_spec.input_width
        )));
    }
    if trunk_spec.input_width != TRUNK_INPUT_WIDTH {
        return Err(NetworkError::ShapeMismatch(format!(
            "trunk input width {} != {TRUNK_INPUT_WIDTH}",
            trunk_spec.input_width
        )));
    }
    if branch_spec.output_width != trunk_spec.output_width {
        return Err(NetworkError::ShapeMismatch(format!(
            "embedding widths differ: branch {} vs trunk {}",
            branch_spec.output_width, trunk_spec.output_width
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut branch = Mlp::init(branch_spec, &mut rng)?;
    let mut trunk = Mlp::init(trunk_spec, &mut rng)?;
    // start the raw inner product near softplus^{-1}(typical time value)
    // instead of 0: biasing the embedding outputs so <b, t> ~ -2.5 keeps
    // the initial correction term at a market-plausible scale and avoids
    // the early global push toward the collapsed zero-time-value basin
    let p = branch_spec.output_width;
    let t_bias = 0.2;
    let b_bias = -2.5 / (p as f64 * t_bias);
    for slot in branch.layers[branch_spec.hidden_depth].b.iter_mut() {
        *slot = b_bias;
    }
    for slot in trunk.layers[trunk_spec.hidden_depth].b.iter_mut() {
        *slot = t_bias;
    }
    Ok(DeepOnet {
        meta: ModelMeta {
            seed,
            config_hash: config_hash(&branch_spec, &trunk_spec, &bounds),
        },
        branch,
        trunk,
        bounds,
    })
}

impl DeepOnet {
    /// Embedding width `p`.
    pub fn p(&self) -> usize {
        self.branch.spec.output_width
    }

    pub fn param_count(&self) -> usize {
        self.branch.param_count() + self.trunk.param_count()
    }

    /// Unconstrained network output: the inner product of the branch and
    /// trunk embeddings of the normalized inputs.
    pub fn raw_output(&self, p: &HestonParams, d: &DomainPoint) -> Result<f64, NetworkError> {
        let t = normalize_inputs(p, d, &self.bounds)?;
        let b_emb = self.branch.forward(&t[..5]);
        let t_emb = self.trunk.forward(&t[5..]);
        Ok(b_emb.iter().zip(&t_emb).map(|(a, b)| a * b).sum())
    }

    /// Hard-constrained prediction `phi(x) + tau * softplus(raw)`.
    pub fn u_pred(&self, p: &HestonParams, d: &DomainPoint) -> Result<f64, NetworkError> {
        Ok(payoff(d.x) + d.tau * softplus(self.raw_output(p, d)?))
    }

    /// All weights flattened in a fixed order: branch layers then trunk
    /// layers, each layer's matrix (row-major) followed by its bias.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for mlp in [&self.branch, &self.trunk] {
            for layer in &mlp.layers {
                out.extend_from_slice(&layer.w);
                out.extend_from_slice(&layer.b);
            }
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<(), NetworkError> {
        if flat.len() != self.param_count() {
            return Err(NetworkError::ShapeMismatch(format!(
                "flat parameter vector has {} entries, model has {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut off = 0;
        for mlp in [&mut self.branch, &mut self.trunk] {
            for layer in &mut mlp.layers {
                let nw = layer.w.len();
                layer.w.copy_from_slice(&flat[off..off + nw]);
                off += nw;
                let nb = layer.b.len();
                layer.b.copy_from_slice(&flat[off..off + nb]);
                off += nb;
            }
        }
        Ok(())
    }
}
