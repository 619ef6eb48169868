//! Flat `key = value` configuration with namespaced keys.

use crate::model::{EncoderConfig, OptimizerKind, TrainOptions};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("unknown config key: {0}")]
    UnknownKey(String),
    #[error("bad value for {key}: {value}")]
    BadValue { key: String, value: String },
    #[error("malformed line: {0}")]
    MalformedLine(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub model_d: usize,
    pub model_layers: usize,
    pub model_heads: usize,
    pub model_ff: usize,
    pub model_max_positions: usize,
    pub train_batch_n: usize,
    pub train_steps: usize,
    pub train_lr: f64,
    pub train_optimizer: OptimizerKind,
    pub train_seed: u64,
    pub bpe_merges: usize,
    pub mask_rate: f64,
    pub loss_lambda: f64,
    pub transform_variants_k: usize,
    pub interp_step_limit: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            model_d: 32,
            model_layers: 2,
            model_heads: 4,
            model_ff: 64,
            model_max_positions: 128,
            train_batch_n: 8,
            train_steps: 300,
            train_lr: 3e-3,
            train_optimizer: OptimizerKind::Adam,
            train_seed: 0,
            bpe_merges: 1000,
            mask_rate: 0.15,
            loss_lambda: 1e-5,
            transform_variants_k: 1,
            interp_step_limit: crate::interp::DEFAULT_STEP_LIMIT,
        }
    }
}

impl Config {
    /// Parse `key = value` lines; `#` starts a comment. Unknown keys and
    /// unparsable values are errors.
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let mut config = Config::default();
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::MalformedLine(raw.to_string()))?;
            config.set(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = || ConfigError::BadValue { key: key.to_string(), value: value.to_string() };
        match key {
            "model.d" => self.model_d = value.parse().map_err(|_| bad())?,
            "model.layers" => self.model_layers = value.parse().map_err(|_| bad())?,
            "model.heads" => self.model_heads = value.parse().map_err(|_| bad())?,
            "model.ff" => self.model_ff = value.parse().map_err(|_| bad())?,
            "model.max_positions" => self.model_max_positions = value.parse().map_err(|_| bad())?,
            "train.batch_n" => self.train_batch_n = value.parse().map_err(|_| bad())?,
            "train.steps" => self.train_steps = value.parse().map_err(|_| bad())?,
            "train.lr" => self.train_lr = value.parse().map_err(|_| bad())?,
            "train.optimizer" => {
                self.train_optimizer = OptimizerKind::parse(value).ok_or_else(bad)?
            }
            "train.seed" => self.train_seed = value.parse().map_err(|_| bad())?,
            "bpe.merges" => self.bpe_merges = value.parse().map_err(|_| bad())?,
            "mask.rate" => {
                let rate: f64 = value.parse().map_err(|_| bad())?;
                if !(0.0..1.0).contains(&rate) || rate == 0.0 {
                    return Err(bad());
                }
                self.mask_rate = rate;
            }
            "loss.lambda" => {
                let lambda: f64 = value.parse().map_err(|_| bad())?;
                if lambda < 0.0 {
                    return Err(bad());
                }
                self.loss_lambda = lambda;
            }
            "transform.variants_k" => {
                let k: usize = value.parse().map_err(|_| bad())?;
                if k == 0 {
                    return Err(bad());
                }
                self.transform_variants_k = k;
            }
            "interp.step_limit" => self.interp_step_limit = value.parse().map_err(|_| bad())?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let optimizer = match self.train_optimizer {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        };
        format!(
            "model.d = {}\nmodel.layers = {}\nmodel.heads = {}\nmodel.ff = {}\n\
             model.max_positions = {}\ntrain.batch_n = {}\ntrain.steps = {}\n\
             train.lr = {}\ntrain.optimizer = {}\ntrain.seed = {}\nbpe.merges = {}\n\
             mask.rate = {}\nloss.lambda = {}\ntransform.variants_k = {}\n\
             interp.step_limit = {}\n",
            self.model_d,
            self.model_layers,
            self.model_heads,
            self.model_ff,
            self.model_max_positions,
            self.train_batch_n,
            self.train_steps,
            self.train_lr,
            optimizer,
            self.train_seed,
            self.bpe_merges,
            self.mask_rate,
            self.loss_lambda,
            self.transform_variants_k,
            self.interp_step_limit,
        )
    }

    pub fn encoder_config(&self, vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            vocab_size,
            type_classes: crate::typing::TYPE_CLASS_COUNT,
            hidden: self.model_d,
            layers: self.model_layers,
            heads: self.model_heads,
            feed_forward: self.model_ff,
            max_positions: self.model_max_positions,
            lambda: self.loss_lambda,
            learning_rate: self.train_lr,
            seed: self.train_seed,
        }
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            steps: self.train_steps,
            batch_size: self.train_batch_n,
            seed: self.train_seed,
            mask_rate: self.mask_rate,
            optimizer: self.train_optimizer,
            learning_rate: self.train_lr,
            lambda: self.loss_lambda,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_text() {
        let config = Config::default();
        let parsed = Config::parse(&config.to_text()).unwrap();
        assert_eq!(config, parsed);
    }

    #[test]
    fn parse_overrides_and_comments() {
        let text = "# comment\nmodel.d = 16\nmask.rate = 0.2  # inline\n\ntrain.optimizer = sgd\n";
        let config = Config::parse(text).unwrap();
        assert_eq!(config.model_d, 16);
        assert_eq!(config.mask_rate, 0.2);
        assert_eq!(config.train_optimizer, OptimizerKind::Sgd);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(
            Config::parse("model.dd = 3\n"),
            Err(ConfigError::UnknownKey(_))
        ));
    }

    #[test]
    fn bad_values_rejected() {
        assert!(Config::parse("mask.rate = 1.5\n").is_err());
        assert!(Config::parse("loss.lambda = -1\n").is_err());
        assert!(Config::parse("train.optimizer = sdg\n").is_err());
        assert!(Config::parse("model.d\n").is_err());
    }
}
