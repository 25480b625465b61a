//! Per-feature input scaling fitted on the training split.

use dyadkit_core::representations::{DESCRIPTOR_CHANNELS, DESCRIPTOR_COLS, NODE_FEATURES};
use dyadkit_core::features::NUM_FEATURES;
use dyadkit_nn::{InputForm, ModelInput};

use crate::{Dataset, HarnessError};

/// Slots below this root-mean-square are left unscaled.
const MIN_RMS: f64 = 1e-9;

/// Number of scale entries for `form`.
pub fn scale_len(form: InputForm) -> usize {
    match form {
        InputForm::FeatureMatrix => NUM_FEATURES,
        InputForm::DescriptorImage => DESCRIPTOR_COLS * DESCRIPTOR_CHANNELS,
        InputForm::InteractionGraph => NODE_FEATURES,
    }
}

/// `1 / rms` of every feature slot over the given samples. Scale only, no
/// shift, so zeroed (occluded) frames stay zero.
pub fn fit_input_scale(dataset: &Dataset, form: InputForm, indices: &[usize]) -> Result<Vec<f64>, HarnessError> {
    let n = scale_len(form);
    let mut sum_sq = vec![0.0f64; n];
    let mut count = vec![0usize; n];
    for &i in indices {
        match dataset.input(form, i)? {
            ModelInput::Sequence { data, .. } | ModelInput::Image { data, .. } => {
                for (k, v) in data.iter().enumerate() {
                    sum_sq[k % n] += v * v;
                    count[k % n] += 1;
                }
            }
            ModelInput::Graph { nodes, .. } => {
                let plane = nodes.len() / n;
                for (c, chunk) in nodes.chunks(plane).enumerate() {
                    sum_sq[c] += chunk.iter().map(|v| v * v).sum::<f64>();
                    count[c] += plane;
                }
            }
        }
    }
    Ok(sum_sq
        .iter()
        .zip(&count)
        .map(|(&s, &c)| {
            let rms = if c == 0 { 0.0 } else { (s / c as f64).sqrt() };
            if rms > MIN_RMS {
                1.0 / rms
            } else {
                1.0
            }
        })
        .collect())
}
