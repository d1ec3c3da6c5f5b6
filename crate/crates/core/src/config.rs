//! Run configuration: a line-oriented `key = value` file.
//!
//! Recognised keys: `dim, n_layers, learning_rate, batch_size, alpha, gamma,
//! max_epochs, eval_every, patience, seed, min_tag_count`. Missing keys keep
//! their defaults; `#` starts a comment.

use std::str::FromStr;

use thiserror::Error;

use crate::model::ModelConfig;
use crate::training::TrainConfig;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("invalid value for `{key}`: {message}")]
    Value { key: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dim: usize,
    pub n_layers: usize,
    pub min_tag_count: usize,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dim: 32,
            n_layers: 2,
            min_tag_count: 5,
            train: TrainConfig::default(),
        }
    }
}

pub const KEYS: [&str; 11] = [
    "dim",
    "n_layers",
    "learning_rate",
    "batch_size",
    "alpha",
    "gamma",
    "max_epochs",
    "eval_every",
    "patience",
    "seed",
    "min_tag_count",
];

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T, ConfigError> {
    raw.parse().map_err(|_| ConfigError::Value {
        key: key.to_string(),
        message: format!("cannot parse {raw:?}"),
    })
}

fn value_error(key: &str, message: &str) -> ConfigError {
    ConfigError::Value {
        key: key.to_string(),
        message: message.to_string(),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: line_no })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Syntax { line: line_no });
            }
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    line: line_no,
                    key: key.to_string(),
                });
            }
            if seen.contains(&key) {
                return Err(ConfigError::Duplicate {
                    line: line_no,
                    key: key.to_string(),
                });
            }
            seen.push(key);
            let t = &mut cfg.train;
            match key {
                "dim" => cfg.dim = parse_value(key, value)?,
                "n_layers" => cfg.n_layers = parse_value(key, value)?,
                "min_tag_count" => cfg.min_tag_count = parse_value(key, value)?,
                "learning_rate" => t.learning_rate = parse_value(key, value)?,
                "batch_size" => t.batch_size = parse_value(key, value)?,
                "alpha" => t.alpha = parse_value(key, value)?,
                "gamma" => t.gamma = parse_value(key, value)?,
                "max_epochs" => t.max_epochs = parse_value(key, value)?,
                "eval_every" => t.eval_every = parse_value(key, value)?,
                "patience" => t.patience = parse_value(key, value)?,
                "seed" => t.seed = parse_value(key, value)?,
                _ => unreachable!("key list checked above"),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks ranges, naming the offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let t = &self.train;
        if self.dim == 0 {
            return Err(value_error("dim", "must be >= 1"));
        }
        if self.min_tag_count == 0 {
            return Err(value_error("min_tag_count", "must be >= 1"));
        }
        if !(t.learning_rate.is_finite() && t.learning_rate > 0.0) {
            return Err(value_error("learning_rate", "must be a positive real"));
        }
        if t.batch_size == 0 {
            return Err(value_error("batch_size", "must be >= 1"));
        }
        if !(t.alpha.is_finite() && t.alpha >= 0.0) {
            return Err(value_error("alpha", "must be >= 0"));
        }
        if !(t.gamma.is_finite() && t.gamma >= 0.0) {
            return Err(value_error("gamma", "must be >= 0"));
        }
        if t.max_epochs == 0 {
            return Err(value_error("max_epochs", "must be >= 1"));
        }
        if t.eval_every == 0 {
            return Err(value_error("eval_every", "must be >= 1"));
        }
        if t.patience == 0 {
            return Err(value_error("patience", "must be >= 1"));
        }
        Ok(())
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig::new(self.dim, self.n_layers)
    }
}
