//! Bit-exact text checkpoint format, schema `deepsvm-ckpt-1`.
//!
//! Every float is written as the 16-hex-digit little-endian byte image of
//! its IEEE 754 representation, so a round trip is the identity on the
//! weight vector and files diff cleanly. Writes go to a temp file first
//! and are renamed into place.

use super::{DeepOnet, MlpSpec, ModelMeta};
use crate::domain::{DomainBounds, AXES};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use thiserror::Error;

pub const SCHEMA_VERSION: &str = "deepsvm-ckpt-1";

#[derive(Error, Debug)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("unrecognized checkpoint version {found:?} (expected {SCHEMA_VERSION:?})")]
    VersionMismatch { found: String },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Training metadata carried alongside the weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub config_hash: u64,
    pub stage: u32,
    pub step: u64,
    /// `[l_phys, l_bound, l_atm, total]`; NaN before training.
    pub losses: [f64; 4],
}

impl CheckpointMeta {
    pub fn untrained(meta: ModelMeta) -> Self {
        Self {
            seed: meta.seed,
            config_hash: meta.config_hash,
            stage: 0,
            step: 0,
            losses: [f64::NAN; 4],
        }
    }
}

fn f64_to_hex(v: f64) -> String {
    let mut s = String::with_capacity(16);
    for byte in v.to_le_bytes() {
        write!(s, "{byte:02x}").unwrap();
    }
    s
}

fn f64_from_hex(s: &str) -> Result<f64, CheckpointError> {
    if s.len() != 16 || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(CheckpointError::Corrupt(format!(
            "bad float field {s:?} (want 16 hex digits)"
        )));
    }
    let mut bytes = [0u8; 8];
    for (i, chunk) in s.as_bytes().chunks(2).enumerate() {
        let hi = (chunk[0] as char).to_digit(16).unwrap() as u8;
        let lo = (chunk[1] as char).to_digit(16).unwrap() as u8;
        bytes[i] = (hi << 4) | lo;
    }
    Ok(f64::from_le_bytes(bytes))
}

fn hex_row(vals: &[f64]) -> String {
    let mut s = String::with_capacity(vals.len() * 17);
    for (i, v) in vals.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        s.push_str(&f64_to_hex(*v));
    }
    s
}

fn parse_hex_row(line: &str, expect: usize) -> Result<Vec<f64>, CheckpointError> {
    let vals: Result<Vec<f64>, _> = line.split_whitespace().map(f64_from_hex).collect();
    let vals = vals?;
    if vals.len() != expect {
        return Err(CheckpointError::ShapeMismatch(format!(
            "row holds {} values, expected {expect}",
            vals.len()
        )));
    }
    Ok(vals)
}

pub fn checkpoint_to_string(model: &DeepOnet, meta: &CheckpointMeta) -> String {
    let mut out = String::new();
    out.push_str(SCHEMA_VERSION);
    out.push('\n');
    let _ = writeln!(out, "seed {}", meta.seed);
    let _ = writeln!(out, "config-hash {:016x}", meta.config_hash);
    let _ = writeln!(out, "stage {}", meta.stage);
    let _ = writeln!(out, "step {}", meta.step);
    let _ = writeln!(out, "losses {}", hex_row(&meta.losses));
    let mut bvals = Vec::with_capacity(16);
    for axis in AXES {
        let (min, max) = model.bounds.range(axis);
        bvals.push(min);
        bvals.push(max);
    }
    let _ = writeln!(out, "bounds {}", hex_row(&bvals));
    for (name, mlp) in [("branch", &model.branch), ("trunk", &model.trunk)] {
        let s = mlp.spec;
        let _ = writeln!(
            out,
            "{name}-spec {} {} {} {}",
            s.input_width, s.hidden_width, s.hidden_depth, s.output_width
        );
    }
    for (name, mlp) in [("branch", &model.branch), ("trunk", &model.trunk)] {
        for (k, layer) in mlp.layers.iter().enumerate() {
            let _ = writeln!(out, "tensor {name}.{k}.w {} {}", layer.rows, layer.cols);
            for r in 0..layer.rows {
                let _ = writeln!(out, "{}", hex_row(&layer.w[r * layer.cols..(r + 1) * layer.cols]));
            }
            let _ = writeln!(out, "vector {name}.{k}.b {}", layer.rows);
            let _ = writeln!(out, "{}", hex_row(&layer.b));
        }
    }
    out.push_str("end\n");
    out
}

/// Atomic write: temp file in the target directory, then rename.
pub fn save_checkpoint(
    model: &DeepOnet,
    meta: &CheckpointMeta,
    path: &Path,
) -> Result<(), CheckpointError> {
    let body = checkpoint_to_string(model, meta);
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "checkpoint".into())
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(body.as_bytes())?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

struct Lines<'a> {
    inner: std::str::Lines<'a>,
    n: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<&'a str, CheckpointError> {
        self.n += 1;
        self.inner
            .next()
            .ok_or_else(|| CheckpointError::Corrupt(format!("unexpected end of file at line {}", self.n)))
    }

    fn expect_kv(&mut self, key: &str) -> Result<&'a str, CheckpointError> {
        let line = self.next()?;
        line.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' '))
            .ok_or_else(|| CheckpointError::Corrupt(format!("expected `{key} ...`, found {line:?}")))
    }
}

fn parse_spec(line: &str) -> Result<MlpSpec, CheckpointError> {
    let nums: Result<Vec<usize>, _> = line.split_whitespace().map(str::parse).collect();
    let nums = nums.map_err(|e| CheckpointError::Corrupt(format!("bad spec line {line:?}: {e}")))?;
    if nums.len() != 4 {
        return Err(CheckpointError::Corrupt(format!(
            "spec line {line:?} must hold 4 integers"
        )));
    }
    Ok(MlpSpec::new(nums[0], nums[1], nums[2], nums[3]))
}

pub fn checkpoint_from_string(body: &str) -> Result<(DeepOnet, CheckpointMeta), CheckpointError> {
    let mut lines = Lines {
        inner: body.lines(),
        n: 0,
    };
    let version = lines.next()?;
    if version != SCHEMA_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: version.to_string(),
        });
    }
    let seed: u64 = lines
        .expect_kv("seed")?
        .parse()
        .map_err(|e| CheckpointError::Corrupt(format!("bad seed: {e}")))?;
    let config_hash = u64::from_str_radix(lines.expect_kv("config-hash")?, 16)
        .map_err(|e| CheckpointError::Corrupt(format!("bad config hash: {e}")))?;
    let stage: u32 = lines
        .expect_kv("stage")?
        .parse()
        .map_err(|e| CheckpointError::Corrupt(format!("bad stage: {e}")))?;
    let step: u64 = lines
        .expect_kv("step")?
        .parse()
        .map_err(|e| CheckpointError::Corrupt(format!("bad step: {e}")))?;
    let losses_v = parse_hex_row(lines.expect_kv("losses")?, 4)?;
    let bounds_v = parse_hex_row(lines.expect_kv("bounds")?, 16)?;
    let mut bounds = DomainBounds::default();
    let mut it = bounds_v.chunks(2);
    let mut take = || {
        let c = it.next().unwrap();
        (c[0], c[1])
    };
    bounds.kappa = take();
    bounds.theta = take();
    bounds.sigma = take();
    bounds.rho = take();
    bounds.r = take();
    bounds.x = take();
    bounds.nu = take();
    bounds.tau = take();

    let branch_spec = parse_spec(lines.expect_kv("branch-spec")?)?;
    let trunk_spec = parse_spec(lines.expect_kv("trunk-spec")?)?;
    if branch_spec.output_width != trunk_spec.output_width {
        return Err(CheckpointError::ShapeMismatch(format!(
            "embedding widths differ: branch {} vs trunk {}",
            branch_spec.output_width, trunk_spec.output_width
        )));
    }
    branch_spec
        .validate()
        .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    trunk_spec
        .validate()
        .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;

    // build a model shell, then fill weights from the tensor records
    let mut model = super::init_model(branch_spec, trunk_spec, bounds, seed)
        .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    for (name, spec) in [("branch", branch_spec), ("trunk", trunk_spec)] {
        let mlp = if name == "branch" {
            &mut model.branch
        } else {
            &mut model.trunk
        };
        for (k, (rows, cols)) in spec.layer_shapes().into_iter().enumerate() {
            let header = lines.next()?;
            let expect = format!("tensor {name}.{k}.w {rows} {cols}");
            if header != expect {
                return Err(if header.starts_with("tensor") || header.starts_with("vector") {
                    CheckpointError::ShapeMismatch(format!("found {header:?}, expected {expect:?}"))
                } else {
                    CheckpointError::Corrupt(format!("found {header:?}, expected {expect:?}"))
                });
            }
            let layer = &mut mlp.layers[k];
            for r in 0..rows {
                let row = parse_hex_row(lines.next()?, cols)?;
                layer.w[r * cols..(r + 1) * cols].copy_from_slice(&row);
            }
            let header = lines.next()?;
            let expect = format!("vector {name}.{k}.b {rows}");
            if header != expect {
                return Err(CheckpointError::Corrupt(format!(
                    "found {header:?}, expected {expect:?}"
                )));
            }
            let b = parse_hex_row(lines.next()?, rows)?;
            layer.b.copy_from_slice(&b);
        }
    }
    let end = lines.next()?;
    if end != "end" {
        return Err(CheckpointError::Corrupt(format!(
            "missing end marker, found {end:?}"
        )));
    }
    model.meta = ModelMeta { seed, config_hash };
    Ok((
        model,
        CheckpointMeta {
            seed,
            config_hash,
            stage,
            step,
            losses: [losses_v[0], losses_v[1], losses_v[2], losses_v[3]],
        },
    ))
}

pub fn load_checkpoint(path: &Path) -> Result<(DeepOnet, CheckpointMeta), CheckpointError> {
    let body = std::fs::read_to_string(path)?;
    checkpoint_from_string(&body)
}
