//! Mini-batch training with early stopping on validation accuracy.

use std::time::Instant;

use dyadkit_nn::{train_step, Adam, AdamConfig, LossOptions, Model, ModelSpec, Precision};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::normalize::fit_input_scale;
use crate::{evaluate, Dataset, HarnessError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    pub precision: Precision,
    /// Samples per gradient tape; see [`LossOptions::chunk`].
    pub grad_chunk: usize,
    /// Seeds parameter initialization and batch order.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 100,
            patience: 10,
            batch_size: 16,
            optimizer: AdamConfig::default(),
            precision: Precision::F64,
            grad_chunk: 16,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.max_epochs == 0 {
            return Err(HarnessError::Config("max_epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(HarnessError::Config("batch_size must be at least 1".into()));
        }
        self.optimizer.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub history: Vec<EpochStats>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    #[serde(skip)]
    pub wall_seconds: f64,
}

impl TrainLog {
    pub fn epochs(&self) -> usize {
        self.history.len()
    }
}

/// Trains a fresh model on `train` and returns the parameters from the
/// epoch with the best validation accuracy (the earliest on ties). Stops
/// after `patience` epochs without improvement or once validation accuracy
/// is perfect. With an empty validation set every epoch runs and the last
/// parameters are kept.
pub fn train_model(
    spec: &ModelSpec,
    dataset: &Dataset,
    train: &[usize],
    val: &[usize],
    cfg: &TrainConfig,
) -> Result<(Model, TrainLog), HarnessError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(HarnessError::Config(format!("no training samples for `{}`", spec.kind().id())));
    }
    let form = spec.input_form();
    dataset.require(form, spec.kind().id())?;
    let start = Instant::now();
    let mut model = Model::build(spec, cfg.seed)?;
    model.set_input_scale(fit_input_scale(dataset, form, train)?)?;
    let mut adam = Adam::new(cfg.optimizer, &model);
    let opts = LossOptions { precision: cfg.precision, chunk: cfg.grad_chunk, fault: None };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order = train.to_vec();

    let mut best: Option<(Model, usize, f64)> = None;
    let mut history = Vec::new();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let inputs = dataset.inputs(form, batch)?;
            let labels: Vec<usize> = batch.iter().map(|&i| dataset.label(i)).collect();
            loss_sum += train_step(&mut model, &mut adam, &inputs, &labels, &opts)? * batch.len() as f64;
        }
        let val_accuracy = if val.is_empty() { 0.0 } else { evaluate(&model, dataset, val, cfg.precision)?.accuracy() };
        history.push(EpochStats { epoch, mean_loss: loss_sum / order.len() as f64, val_accuracy });
        if val.is_empty() {
            continue;
        }
        if best.as_ref().map_or(true, |b| val_accuracy > b.2) {
            best = Some((model.clone(), epoch, val_accuracy));
        }
        let (_, best_epoch, best_acc) = best.as_ref().expect("set above");
        if *best_acc >= 1.0 || epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    let last = history.len();
    let (model, best_epoch, best_val_accuracy) = best.unwrap_or((model, last, 0.0));
    let log = TrainLog { history, best_epoch, best_val_accuracy, wall_seconds: start.elapsed().as_secs_f64() };
    Ok((model, log))
}
