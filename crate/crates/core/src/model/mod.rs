//! Toy-scale transformer encoder with a projection head, a type-inference
//! head, and a masked-language-modeling head, trained under the combined
//! contrastive + type-inference + MLM + L2 objective.
//!
//! All math runs on an in-crate tape autodiff ([`graph`]) over `f64`
//! tensors; every gradient path is verified against central finite
//! differences (see [`train::grad_check`] and the acceptance suite).

pub mod checkpoint;
pub mod encoder;
pub mod graph;
pub mod losses;
pub mod tensor;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use encoder::{embed_sequence, Forward};
pub use losses::{mvcl_reference, pair_loss, total_loss, BatchLoss};
pub use train::{grad_check, train, GradCheckReport, LossRecord, OptimizerKind, TrainLog, TrainOptions};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tensor::Tensor;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error("token id {id} out of range (vocab {vocab})")]
    IdOutOfRange { id: u32, vocab: usize },
    #[error("sequence length {len} exceeds max positions {max}")]
    TooLong { len: usize, max: usize },
    #[error("empty input sequence")]
    EmptyInput,
    #[error("non-finite {component} loss at step {step}")]
    NonFinite { component: &'static str, step: usize },
}

/// Architecture and objective hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub type_classes: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub feed_forward: usize,
    pub max_positions: usize,
    /// L2 regularizer coefficient.
    pub lambda: f64,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            vocab_size: 256,
            type_classes: crate::typing::TYPE_CLASS_COUNT,
            hidden: 32,
            layers: 2,
            heads: 4,
            feed_forward: 64,
            max_positions: 128,
            lambda: 1e-5,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hidden == 0 || !self.hidden.is_multiple_of(self.heads) {
            return Err(ModelError::BadConfig(format!(
                "hidden size {} must be a positive multiple of head count {}",
                self.hidden, self.heads
            )));
        }
        if self.lambda < 0.0 {
            return Err(ModelError::BadConfig("lambda must be non-negative".into()));
        }
        if self.vocab_size == 0 || self.layers == 0 || self.max_positions == 0 {
            return Err(ModelError::BadConfig("zero-sized model dimension".into()));
        }
        Ok(())
    }
}

/// All trainable parameters in declared order. The order is the checkpoint
/// blob layout, so it never changes silently.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub config: EncoderConfig,
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ModelState {
    /// Seeded initialization: embeddings N(0, 0.02), matrices Xavier-uniform,
    /// biases zero, layer-norm gains one.
    pub fn init(config: EncoderConfig) -> Result<ModelState, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        let d = config.hidden;
        let ff = config.feed_forward;

        let push = |name: String, t: Tensor, names: &mut Vec<String>, tensors: &mut Vec<Tensor>| {
            names.push(name);
            tensors.push(t);
        };

        push(
            "token_embedding".into(),
            gaussian(&mut rng, config.vocab_size, d, 0.02),
            &mut names,
            &mut tensors,
        );
        push(
            "position_embedding".into(),
            gaussian(&mut rng, config.max_positions, d, 0.02),
            &mut names,
            &mut tensors,
        );
        for l in 0..config.layers {
            push(format!("layer{l}.ln1.gamma"), ones(1, d), &mut names, &mut tensors);
            push(format!("layer{l}.ln1.beta"), Tensor::zeros(1, d), &mut names, &mut tensors);
            for w in ["wq", "wk", "wv", "wo"] {
                push(format!("layer{l}.attn.{w}"), xavier(&mut rng, d, d), &mut names, &mut tensors);
                push(
                    format!("layer{l}.attn.{}", w.replace('w', "b")),
                    Tensor::zeros(1, d),
                    &mut names,
                    &mut tensors,
                );
            }
            push(format!("layer{l}.ln2.gamma"), ones(1, d), &mut names, &mut tensors);
            push(format!("layer{l}.ln2.beta"), Tensor::zeros(1, d), &mut names, &mut tensors);
            push(format!("layer{l}.ff.w1"), xavier(&mut rng, d, ff), &mut names, &mut tensors);
            push(format!("layer{l}.ff.b1"), Tensor::zeros(1, ff), &mut names, &mut tensors);
            push(format!("layer{l}.ff.w2"), xavier(&mut rng, ff, d), &mut names, &mut tensors);
            push(format!("layer{l}.ff.b2"), Tensor::zeros(1, d), &mut names, &mut tensors);
        }
        push("final_ln.gamma".into(), ones(1, d), &mut names, &mut tensors);
        push("final_ln.beta".into(), Tensor::zeros(1, d), &mut names, &mut tensors);
        push("proj.w1".into(), xavier(&mut rng, d, d), &mut names, &mut tensors);
        push("proj.b1".into(), Tensor::zeros(1, d), &mut names, &mut tensors);
        push("proj.w2".into(), xavier(&mut rng, d, d), &mut names, &mut tensors);
        push("proj.b2".into(), Tensor::zeros(1, d), &mut names, &mut tensors);
        push("fgti.w".into(), xavier(&mut rng, d, config.type_classes), &mut names, &mut tensors);
        push("fgti.b".into(), Tensor::zeros(1, config.type_classes), &mut names, &mut tensors);
        push("mmlm.w".into(), xavier(&mut rng, d, config.vocab_size), &mut names, &mut tensors);
        push("mmlm.b".into(), Tensor::zeros(1, config.vocab_size), &mut names, &mut tensors);

        Ok(ModelState { config, names, tensors })
    }

    pub fn param_count(&self) -> usize {
        self.tensors.len()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn tensor(&self, index: usize) -> &Tensor {
        &self.tensors[index]
    }

    pub fn tensor_mut(&mut self, index: usize) -> &mut Tensor {
        &mut self.tensors[index]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(&mut self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter())
    }

    /// Euclidean norm of all parameters.
    pub fn theta_norm(&self) -> f64 {
        self.tensors.iter().map(Tensor::sum_squares).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Tensor {
    // Box-Muller keeps us off external distributions crates
    let data = (0..rows * cols)
        .map(|_| {
            let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.random();
            std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect();
    Tensor::from_vec(rows, cols, data)
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::from_vec(rows, cols, data)
}

fn ones(rows: usize, cols: usize) -> Tensor {
    Tensor::from_vec(rows, cols, vec![1.0; rows * cols])
}
