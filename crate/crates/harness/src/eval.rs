//! Test-set evaluation.

use dyadkit_core::skeleton::NUM_CLASSES;
use dyadkit_nn::{Model, Precision};
use serde::{Deserialize, Serialize};

use crate::{Dataset, HarnessError};

/// Samples converted to model inputs at a time.
const EVAL_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
}

impl Evaluation {
    pub fn empty() -> Self {
        Evaluation { confusion: vec![vec![0; NUM_CLASSES]; NUM_CLASSES] }
    }

    pub fn total(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.confusion.len()).map(|i| self.confusion[i][i]).sum()
    }

    /// Fraction correct; 0 when there are no samples.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.correct() as f64 / total as f64
        }
    }

    pub fn class_count(&self, class: usize) -> u64 {
        self.confusion[class].iter().sum()
    }

    /// Per-class recall; `None` for classes absent from the evaluated set.
    pub fn per_class(&self) -> Vec<Option<f64>> {
        (0..self.confusion.len())
            .map(|c| {
                let n = self.class_count(c);
                (n > 0).then(|| self.confusion[c][c] as f64 / n as f64)
            })
            .collect()
    }
}

/// Index of the largest probability; the lowest index wins ties.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

pub fn evaluate(model: &Model, dataset: &Dataset, indices: &[usize], precision: Precision) -> Result<Evaluation, HarnessError> {
    let form = model.spec().input_form();
    let mut out = Evaluation::empty();
    for chunk in indices.chunks(EVAL_BATCH) {
        let inputs = dataset.inputs(form, chunk)?;
        let probs = model.forward_batch_with(&inputs, precision)?;
        for (&i, p) in chunk.iter().zip(&probs) {
            out.confusion[dataset.label(i)][argmax(p)] += 1;
        }
    }
    Ok(out)
}
