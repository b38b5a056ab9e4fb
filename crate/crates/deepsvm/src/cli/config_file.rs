//! Flat `key = value` training configuration files. Keys mirror the
//! [`TrainConfig`] field names exactly; unknown keys are errors so typos in
//! hyperparameters cannot pass silently.

use crate::training::TrainConfig;
use std::path::Path;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: cannot parse value {value:?} for {key}: {what}")]
    BadValue {
        line: usize,
        key: String,
        value: String,
        what: String,
    },
    #[error("line {line}: expected `key = value`, found {text:?}")]
    Malformed { line: usize, text: String },
}

pub fn parse_config(text: &str) -> Result<TrainConfig, ConfigError> {
    let mut cfg = TrainConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = raw.split('#').next().unwrap_or("").trim();
        if stripped.is_empty() {
            continue;
        }
        let Some((key, value)) = stripped.split_once('=') else {
            return Err(ConfigError::Malformed {
                line,
                text: raw.to_string(),
            });
        };
        let key = key.trim();
        let value = value.trim();
        macro_rules! set {
            ($field:ident, $ty:ty) => {
                cfg.$field = value.parse::<$ty>().map_err(|e| ConfigError::BadValue {
                    line,
                    key: key.to_string(),
                    value: value.to_string(),
                    what: e.to_string(),
                })?
            };
        }
        match key {
            "hidden_width" => set!(hidden_width, usize),
            "hidden_depth" => set!(hidden_depth, usize),
            "embedding_width" => set!(embedding_width, usize),
            "adam_steps" => set!(adam_steps, u64),
            "lr0" => set!(lr0, f64),
            "lr_decay" => set!(lr_decay, f64),
            "lr_decay_interval" => set!(lr_decay_interval, u64),
            "batch_size" => set!(batch_size, usize),
            "rar_interval" => set!(rar_interval, u64),
            "rar_candidates" => set!(rar_candidates, usize),
            "rar_top_k" => set!(rar_top_k, usize),
            "interior_count" => set!(interior_count, usize),
            "atm_count" => set!(atm_count, usize),
            "boundary_count" => set!(boundary_count, usize),
            "boundary_augment" => set!(boundary_augment, usize),
            "lbfgs_memory" => set!(lbfgs_memory, usize),
            "lbfgs_iters" => set!(lbfgs_iters, usize),
            "lbfgs_tol" => set!(lbfgs_tol, f64),
            "lambda_b" => set!(lambda_b, f64),
            "lambda_a" => set!(lambda_a, f64),
            "lambda_max" => set!(lambda_max, f64),
            "alpha_x" => set!(alpha_x, f64),
            "chunk_size" => set!(chunk_size, usize),
            "checkpoint_interval" => set!(checkpoint_interval, u64),
            "seed" => set!(seed, u64),
            other => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: other.to_string(),
                })
            }
        }
    }
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<TrainConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_overrides_and_comments() {
        let cfg = parse_config(
            "# smoke profile\nhidden_width = 64\nadam_steps = 2000 # short\n\nlr0=1e-3\n",
        )
        .unwrap();
        assert_eq!(cfg.hidden_width, 64);
        assert_eq!(cfg.adam_steps, 2000);
        assert_eq!(cfg.lr0, 1e-3);
        // untouched fields keep defaults
        assert_eq!(cfg.interior_count, TrainConfig::default().interior_count);
    }

    #[test]
    fn unknown_key_is_an_error() {
        let err = parse_config("adam_stepz = 100\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { line: 1, .. }));
    }

    #[test]
    fn malformed_and_bad_values_are_errors() {
        assert!(matches!(
            parse_config("just words\n"),
            Err(ConfigError::Malformed { .. })
        ));
        assert!(matches!(
            parse_config("adam_steps = banana\n"),
            Err(ConfigError::BadValue { .. })
        ));
    }
}
