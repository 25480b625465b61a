//! Adam optimizer and the training step.

use serde::{Deserialize, Serialize};

use crate::models::{LossOptions, Model, ModelInput};
use crate::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let ok = self.lr >= 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(NnError::Argument(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// Adam moment estimates, one buffer per parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: usize,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, model: &Model) -> Adam {
        let zeros: Vec<Vec<f64>> = model.blocks().iter().map(|b| vec![0.0; b.data.len()]).collect();
        Adam { config, step: 0, m: zeros.clone(), v: zeros }
    }

    /// Updates taken so far.
    pub fn steps(&self) -> usize {
        self.step
    }

    pub fn update(&mut self, model: &mut Model, grads: &[Vec<f64>]) {
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (((block, g), m), v) in model.blocks_mut().iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((p, g), m), v) in block.data.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
    }
}

/// One optimizer step on a batch; returns the batch loss before the update.
pub fn train_step(
    model: &mut Model,
    adam: &mut Adam,
    inputs: &[ModelInput],
    labels: &[usize],
    opts: &LossOptions,
) -> Result<f64, NnError> {
    let (loss, grads) = model.loss_and_grads_with(inputs, labels, opts)?;
    if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
        return Err(NnError::Training { step: adam.steps() + 1, loss });
    }
    adam.update(model, &grads);
    Ok(loss)
}
