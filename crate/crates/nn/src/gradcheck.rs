//! Finite-difference verification of the analytic gradients.

use dyadkit_core::representations::NODES_PER_FRAME;
use dyadkit_core::skeleton::NUM_CLASSES;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::models::{LossOptions, Model, ModelInput, ModelKind, ModelSpec};
use crate::tape::Fault;
use crate::NnError;

/// Settings for a gradient check run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    /// Frames per input; the check runs on truncated sequences.
    pub frames: usize,
    pub batch: usize,
    /// Entries probed per parameter block (all entries when the block is smaller).
    pub entries_per_block: usize,
    /// Central-difference step; a tenth and a hundredth of it are tried when
    /// the full step crosses a kink.
    pub step: f64,
    /// Smallest denominator of the relative error. Raised automatically to
    /// the rounding limit of the difference quotient.
    pub floor: f64,
    pub seed: u64,
    /// Corrupts one backward rule, for testing the checker itself.
    pub fault: Option<Fault>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { frames: 12, batch: 2, entries_per_block: 16, step: 1e-5, floor: 1e-6, seed: 7, fault: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockCheck {
    pub name: String,
    pub checked: usize,
    /// Entries whose perturbation crossed a ReLU or max-pool kink at every
    /// step size tried.
    pub skipped: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelCheck {
    pub kind: ModelKind,
    pub blocks: Vec<BlockCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradReport {
    pub tol: f64,
    pub models: Vec<ModelCheck>,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }

    /// `(model, block)` pairs above tolerance or with nothing checked.
    pub fn failures(&self) -> Vec<(ModelKind, String)> {
        self.models
            .iter()
            .flat_map(|m| {
                m.blocks
                    .iter()
                    .filter(|b| !(b.max_rel_error <= self.tol) || b.checked == 0)
                    .map(move |b| (m.kind, b.name.clone()))
            })
            .collect()
    }

    pub fn max_rel_error(&self) -> f64 {
        self.models.iter().flat_map(|m| &m.blocks).map(|b| b.max_rel_error).fold(0.0, f64::max)
    }
}

/// Random inputs of the spec's form. Graph inputs get a chain across all
/// nodes plus a few random edges so message passing mixes nodes.
pub fn random_inputs(spec: &ModelSpec, n: usize, rng: &mut ChaCha8Rng) -> Vec<ModelInput> {
    (0..n)
        .map(|_| {
            let mut x = ModelInput::zeros(spec.input_form(), spec.frames);
            match &mut x {
                ModelInput::Image { data, .. } | ModelInput::Sequence { data, .. } => {
                    data.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
                }
                ModelInput::Graph { nodes, adjacency, .. } => {
                    nodes.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
                    let v = NODES_PER_FRAME;
                    for i in 0..v - 1 {
                        adjacency[i * v + i + 1] = 1.0;
                        adjacency[(i + 1) * v + i] = 1.0;
                    }
                    for _ in 0..8 {
                        let (a, b) = (rng.random_range(0..v), rng.random_range(0..v));
                        adjacency[a * v + b] = 1.0;
                        adjacency[b * v + a] = 1.0;
                    }
                }
            }
            x
        })
        .collect()
}

/// Checks one freshly built model of `spec` (with `cfg.frames` frames).
pub fn check_model(spec: &ModelSpec, tol: f64, cfg: &GradCheckConfig) -> Result<ModelCheck, NnError> {
    let spec = spec.with_frames(cfg.frames);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Model::build(&spec, rng.random())?;
    let inputs = random_inputs(&spec, cfg.batch, &mut rng);
    let labels: Vec<usize> = (0..cfg.batch).map(|_| rng.random_range(0..NUM_CLASSES)).collect();
    let opts = LossOptions { fault: cfg.fault, ..LossOptions::default() };
    let (_, analytic) = model.loss_and_grads_with(&inputs, &labels, &opts)?;
    let (base_loss, base_sig) = model.loss_with_signature(&inputs, &labels);
    let mut blocks = Vec::new();
    for b in 0..model.blocks().len() {
        let len = model.blocks()[b].data.len();
        let picks = sample(&mut rng, len, cfg.entries_per_block.min(len)).into_vec();
        let mut check = BlockCheck { name: model.blocks()[b].name.clone(), checked: 0, skipped: 0, max_rel_error: 0.0 };
        for i in picks {
            // A step that moves any ReLU or max-pool across its kink gives a
            // meaningless difference quotient; retry with smaller steps.
            let orig = model.blocks()[b].data[i];
            let mut numeric = None;
            for h in [cfg.step, cfg.step / 10.0, cfg.step / 100.0] {
                model.blocks_mut()[b].data[i] = orig + h;
                let (up, s1) = model.loss_with_signature(&inputs, &labels);
                model.blocks_mut()[b].data[i] = orig - h;
                let (down, s2) = model.loss_with_signature(&inputs, &labels);
                model.blocks_mut()[b].data[i] = orig;
                if s1 == base_sig && s2 == base_sig {
                    // Rounding in the two loss values limits how small a
                    // gradient the quotient resolves to within `tol`.
                    let resolvable = 2.0 * f64::EPSILON * base_loss.abs().max(1.0) / (h * tol);
                    numeric = Some(((up - down) / (2.0 * h), resolvable.max(cfg.floor)));
                    break;
                }
            }
            let Some((numeric, floor)) = numeric else {
                check.skipped += 1;
                continue;
            };
            let a = analytic[b][i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            check.checked += 1;
            if err.is_nan() {
                check.max_rel_error = f64::NAN;
                break;
            }
            check.max_rel_error = check.max_rel_error.max(err);
        }
        blocks.push(check);
    }
    Ok(ModelCheck { kind: spec.kind(), blocks })
}

/// Checks every spec at tolerance `tol`.
pub fn grad_check(specs: &[ModelSpec], tol: f64, cfg: &GradCheckConfig) -> Result<GradReport, NnError> {
    let models = specs.iter().map(|s| check_model(s, tol, cfg)).collect::<Result<_, _>>()?;
    Ok(GradReport { tol, models })
}
