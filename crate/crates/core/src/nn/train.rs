use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::adam::{adam_step, AdamState};
use super::grad::{backward, batch_loss, Example};
use super::model::ModelParams;
use super::{Dims, NnError, TrainHyper};
use crate::dataset::{Claim, Vocabularies};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean loss over the epoch's mini-batches.
    pub train_loss: f64,
    /// Loss on the validation claims after the epoch (training claims if none).
    pub val_loss: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct History {
    /// Mean training loss of the freshly initialized model.
    pub initial_train_loss: f64,
    pub epochs: Vec<EpochStats>,
    /// Epoch whose parameters were returned, if any epoch ran.
    pub best_epoch: Option<usize>,
}

pub fn examples(claims: &[Claim], vocabs: &Vocabularies) -> Vec<Example> {
    claims
        .iter()
        .map(|c| Example {
            features: vocabs.claim_features(c),
            labels: vocabs.target_labels(&c.cpts),
        })
        .collect()
}

/// Mini-batch Adam over seeded shuffles. The learning rate halves whenever
/// validation loss has not improved for `hyper.patience` epochs; the
/// parameters with the lowest validation loss are returned.
pub fn train(
    train: &[Claim],
    validation: &[Claim],
    vocabs: &Vocabularies,
    dims: Dims,
    hyper: &TrainHyper,
) -> Result<(ModelParams, History), NnError> {
    hyper.validate()?;
    if train.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    let mut model = ModelParams::init(vocabs, dims, hyper.seed)?;
    let train_set = examples(train, vocabs);
    let val_set = examples(validation, vocabs);
    let mut history = History {
        initial_train_loss: batch_loss(&model, &train_set)?,
        epochs: Vec::new(),
        best_epoch: None,
    };
    if hyper.epochs == 0 {
        return Ok((model, history));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed.wrapping_add(1));
    let mut state = AdamState::new(&model.weights);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut batch: Vec<Example> = Vec::with_capacity(hyper.batch_size);
    let mut lr = hyper.learning_rate;
    let mut best = (f64::INFINITY, model.weights.clone());
    let mut stale = 0;

    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(hyper.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train_set[i].clone()));
            let (loss, grads) = backward(&model, &batch)?;
            adam_step(&mut model.weights, &grads, &mut state, hyper, lr)?;
            sum += loss * chunk.len() as f64;
        }
        if !model.weights.is_finite() {
            return Err(NnError::Diverged(epoch));
        }
        let train_loss = sum / train_set.len() as f64;
        let val_loss = if val_set.is_empty() {
            train_loss
        } else {
            batch_loss(&model, &val_set)?
        };
        log::info!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5} lr {lr:.2e}");
        history.epochs.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            learning_rate: lr,
        });

        if val_loss < best.0 {
            best = (val_loss, model.weights.clone());
            history.best_epoch = Some(epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= hyper.patience {
                lr *= hyper.lr_decay;
                stale = 0;
            }
        }
    }
    model.weights = best.1;
    Ok((model, history))
}
