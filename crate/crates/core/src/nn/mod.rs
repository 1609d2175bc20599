//! Multi-label network from diagnosis codes to procedure codes.
//!
//! Each ICD is embedded one character at a time: position `p` looks up its
//! character in its own table and the seven rows are concatenated. The
//! vectors of all ICDs on a claim are summed, the provider's embedding row is
//! appended, and four dense layers (ReLU after the first three) produce one
//! logit per CPT label. Training minimizes the batch-mean sigmoid
//! cross-entropy with Adam; gradients are written out by hand in [`grad`].
//!
//! Parameters are `f32`; activations and all reductions run in `f64`.

pub mod adam;
pub mod grad;
pub mod io;
pub mod model;
pub mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codes::ICD_POSITIONS;

pub use adam::{adam_step, AdamState};
pub use grad::{backward, batch_loss, loss, Example};
pub use io::{load_model, load_model_for, save_model};
pub use model::{sigmoid, Dense, ModelParams, Weights};
pub use train::{examples, train, EpochStats, History};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid dimensions: {0}")]
    BadDims(String),
    #[error("invalid hyperparameters: {0}")]
    BadHyper(String),
    #[error("features or model do not match the vocabularies")]
    VocabMismatch,
    #[error("claim has no diagnosis codes")]
    NoDiagnoses,
    #[error("feature indices out of range")]
    BadFeatures,
    #[error("{logits} logits but {targets} targets")]
    LengthMismatch { logits: usize, targets: usize },
    #[error("tensor shapes differ")]
    ShapeMismatch,
    #[error("empty batch")]
    EmptyBatch,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("parameters became non-finite in epoch {0}")]
    Diverged(usize),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a model file")]
    BadMagic,
    #[error("unsupported model file version {0}")]
    VersionMismatch(u32),
    #[error("model file checksum mismatch (truncated or corrupted)")]
    ChecksumMismatch,
    #[error("corrupt model file: {0}")]
    Corrupt(String),
}

/// Embedding and hidden layer sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub char_dim: usize,
    pub provider_dim: usize,
    pub hidden: [usize; 3],
}

impl Default for Dims {
    fn default() -> Self {
        Dims {
            char_dim: 8,
            provider_dim: 16,
            hidden: [256, 256, 128],
        }
    }
}

impl Dims {
    /// Length of the pooled ICD vector plus the provider vector.
    pub fn input_len(&self) -> usize {
        ICD_POSITIONS * self.char_dim + self.provider_dim
    }

    pub(crate) fn layer_widths(&self, labels: usize) -> [usize; 5] {
        [self.input_len(), self.hidden[0], self.hidden[1], self.hidden[2], labels]
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.char_dim == 0 || self.provider_dim == 0 || self.hidden.contains(&0) {
            return Err(NnError::BadDims(format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Factor applied to the learning rate on a validation plateau.
    pub lr_decay: f64,
    /// Epochs without validation improvement before decaying.
    pub patience: usize,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 256,
            epochs: 20,
            seed: 0,
            lr_decay: 0.5,
            patience: 2,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<(), NnError> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.batch_size >= 1
            && self.lr_decay > 0.0
            && self.patience >= 1;
        if ok {
            Ok(())
        } else {
            Err(NnError::BadHyper(format!("{self:?}")))
        }
    }
}
