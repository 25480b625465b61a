//! Model specifications, inputs and the shared classification head.

mod bilstm;
mod cnn;
mod convlstm;
mod stgcn;
mod transformer;

use std::fmt;
use std::str::FromStr;

use dyadkit_core::features::NUM_FEATURES;
use dyadkit_core::representations::{DESCRIPTOR_CHANNELS, DESCRIPTOR_COLS, NODES_PER_FRAME, NODE_FEATURES};
use dyadkit_core::skeleton::{FRAMES_PER_SAMPLE, NUM_CLASSES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::real::Real;
use crate::tape::{Fault, Tape, Var};
use crate::NnError;

pub use stgcn::normalized_adjacency;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "cnn")]
    Cnn,
    #[serde(rename = "bilstm")]
    BiLstm,
    #[serde(rename = "convlstm")]
    ConvLstm,
    #[serde(rename = "stgcn")]
    StGcn,
    #[serde(rename = "transformer")]
    Transformer,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] =
        [ModelKind::Cnn, ModelKind::BiLstm, ModelKind::ConvLstm, ModelKind::StGcn, ModelKind::Transformer];

    /// Identifier used in files and on the command line.
    pub fn id(self) -> &'static str {
        match self {
            ModelKind::Cnn => "cnn",
            ModelKind::BiLstm => "bilstm",
            ModelKind::ConvLstm => "convlstm",
            ModelKind::StGcn => "stgcn",
            ModelKind::Transformer => "transformer",
        }
    }

    /// Name used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::Cnn => "CNN",
            ModelKind::BiLstm => "Bi-dir LSTM",
            ModelKind::ConvLstm => "ConvLSTM",
            ModelKind::StGcn => "ST-GCN",
            ModelKind::Transformer => "Transformer",
        }
    }

    pub fn input_form(self) -> InputForm {
        match self {
            ModelKind::Cnn => InputForm::DescriptorImage,
            ModelKind::StGcn => InputForm::InteractionGraph,
            _ => InputForm::FeatureMatrix,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ModelKind {
    type Err = NnError;
    fn from_str(s: &str) -> Result<Self, NnError> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.id() == s.to_ascii_lowercase())
            .ok_or_else(|| NnError::Argument(format!("unknown model kind {s:?} (expected cnn, bilstm, convlstm, stgcn or transformer)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputForm {
    DescriptorImage,
    FeatureMatrix,
    InteractionGraph,
}

impl fmt::Display for InputForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputForm::DescriptorImage => "descriptor_image",
            InputForm::FeatureMatrix => "feature_matrix",
            InputForm::InteractionGraph => "interaction_graph",
        })
    }
}

/// Architecture-specific hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum Architecture {
    #[serde(rename = "cnn")]
    Cnn { channels: [usize; 2], kernel: usize, pool: usize },
    #[serde(rename = "bilstm")]
    BiLstm { hidden: usize },
    /// Convolutional LSTM along the feature axis. The input-to-state
    /// convolution uses `stride`; the final hidden state is average-pooled in
    /// windows of `pool` positions.
    #[serde(rename = "convlstm")]
    ConvLstm { channels: usize, kernel: usize, stride: usize, pool: usize },
    #[serde(rename = "stgcn")]
    /// `temporal_stride` applies to the last block's temporal convolution.
    StGcn { channels: [usize; 2], temporal_kernel: usize, temporal_stride: usize },
    #[serde(rename = "transformer")]
    Transformer { dim: usize, layers: usize, heads: usize, ff: usize },
}

impl Architecture {
    pub fn kind(&self) -> ModelKind {
        match self {
            Architecture::Cnn { .. } => ModelKind::Cnn,
            Architecture::BiLstm { .. } => ModelKind::BiLstm,
            Architecture::ConvLstm { .. } => ModelKind::ConvLstm,
            Architecture::StGcn { .. } => ModelKind::StGcn,
            Architecture::Transformer { .. } => ModelKind::Transformer,
        }
    }

    pub fn default_for(kind: ModelKind) -> Architecture {
        match kind {
            ModelKind::Cnn => Architecture::Cnn { channels: [16, 32], kernel: 3, pool: 2 },
            ModelKind::BiLstm => Architecture::BiLstm { hidden: 64 },
            ModelKind::ConvLstm => Architecture::ConvLstm { channels: 16, kernel: 5, stride: 4, pool: 4 },
            ModelKind::StGcn => Architecture::StGcn { channels: [16, 32], temporal_kernel: 9, temporal_stride: 2 },
            ModelKind::Transformer => Architecture::Transformer { dim: 64, layers: 2, heads: 4, ff: 128 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub arch: Architecture,
    /// Frames per input sample.
    pub frames: usize,
    /// Width of the first head layer.
    pub head_hidden: usize,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> ModelSpec {
        ModelSpec { arch: Architecture::default_for(kind), frames: FRAMES_PER_SAMPLE, head_hidden: 32 }
    }

    pub fn with_frames(mut self, frames: usize) -> ModelSpec {
        self.frames = frames;
        self
    }

    pub fn kind(&self) -> ModelKind {
        self.arch.kind()
    }

    pub fn input_form(&self) -> InputForm {
        self.kind().input_form()
    }

    /// Shape of one input sample.
    pub fn input_shape(&self) -> Vec<usize> {
        match self.input_form() {
            InputForm::DescriptorImage => vec![self.frames, DESCRIPTOR_COLS, DESCRIPTOR_CHANNELS],
            InputForm::FeatureMatrix => vec![self.frames, NUM_FEATURES],
            InputForm::InteractionGraph => vec![NODE_FEATURES, self.frames, NODES_PER_FRAME],
        }
    }

    /// Length of the per-feature input scale vector.
    pub fn scale_len(&self) -> usize {
        match self.input_form() {
            InputForm::DescriptorImage => DESCRIPTOR_COLS * DESCRIPTOR_CHANNELS,
            InputForm::FeatureMatrix => NUM_FEATURES,
            InputForm::InteractionGraph => NODE_FEATURES,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: String| Err(NnError::Spec(m));
        if self.frames == 0 || self.head_hidden == 0 {
            return bad("frames and head_hidden must be positive".into());
        }
        match self.arch {
            Architecture::Cnn { channels, kernel, pool } => {
                if channels.contains(&0) || kernel % 2 == 0 || pool == 0 {
                    return bad(format!("cnn needs positive channels, an odd kernel and a positive pool, got {channels:?}/{kernel}/{pool}"));
                }
                if self.frames / pool / pool == 0 {
                    return bad(format!("cnn with pool {pool} needs at least {} frames", pool * pool));
                }
            }
            Architecture::BiLstm { hidden } if hidden == 0 => return bad("bilstm hidden must be positive".into()),
            Architecture::ConvLstm { channels, kernel, stride, pool } => {
                if channels == 0 || kernel % 2 == 0 || stride == 0 || pool == 0 {
                    return bad("convlstm needs positive channels, stride and pool and an odd kernel".into());
                }
            }
            Architecture::StGcn { channels, temporal_kernel, temporal_stride } => {
                if channels.contains(&0) || temporal_kernel % 2 == 0 || temporal_stride == 0 {
                    return bad("stgcn needs positive channels and stride and an odd temporal kernel".into());
                }
            }
            Architecture::Transformer { dim, layers, heads, ff } => {
                if dim == 0 || heads == 0 || dim % heads != 0 || ff == 0 || layers == 0 {
                    return bad(format!("transformer dim {dim} must be a positive multiple of heads {heads}"));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// One model input sample.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelInput {
    /// Descriptor image, `rows × 157 × 3`, channel fastest.
    Image { rows: usize, data: Vec<f64> },
    /// Feature matrix, `rows × 467`.
    Sequence { rows: usize, data: Vec<f64> },
    /// Node features `[9][frames][64]` plus the binary 64×64 frame adjacency.
    Graph { frames: usize, nodes: Vec<f64>, adjacency: Vec<f64> },
}

impl ModelInput {
    pub fn form(&self) -> InputForm {
        match self {
            ModelInput::Image { .. } => InputForm::DescriptorImage,
            ModelInput::Sequence { .. } => InputForm::FeatureMatrix,
            ModelInput::Graph { .. } => InputForm::InteractionGraph,
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        match self {
            ModelInput::Image { rows, data } => vec![*rows, data.len() / rows.max(&1) / DESCRIPTOR_CHANNELS, DESCRIPTOR_CHANNELS],
            ModelInput::Sequence { rows, data } => vec![*rows, data.len() / rows.max(&1)],
            ModelInput::Graph { frames, nodes, .. } => vec![NODE_FEATURES, *frames, nodes.len() / NODE_FEATURES / frames.max(&1)],
        }
    }

    fn values(&self) -> &[f64] {
        match self {
            ModelInput::Image { data, .. } | ModelInput::Sequence { data, .. } => data,
            ModelInput::Graph { nodes, .. } => nodes,
        }
    }

    /// All-zero input of the given form and frame count.
    pub fn zeros(form: InputForm, frames: usize) -> ModelInput {
        match form {
            InputForm::DescriptorImage => ModelInput::Image { rows: frames, data: vec![0.0; frames * DESCRIPTOR_COLS * DESCRIPTOR_CHANNELS] },
            InputForm::FeatureMatrix => ModelInput::Sequence { rows: frames, data: vec![0.0; frames * NUM_FEATURES] },
            InputForm::InteractionGraph => ModelInput::Graph {
                frames,
                nodes: vec![0.0; NODE_FEATURES * frames * NODES_PER_FRAME],
                adjacency: vec![0.0; NODES_PER_FRAME * NODES_PER_FRAME],
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

/// Named trainable parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Deterministic parameter initialization.
pub(crate) struct Builder {
    rng: ChaCha8Rng,
    blocks: Vec<ParamBlock>,
}

impl Builder {
    /// Glorot-uniform weights.
    pub(crate) fn glorot(&mut self, name: &str, shape: Vec<usize>, fan_in: usize, fan_out: usize) {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n).map(|_| self.rng.random_range(-bound..bound)).collect();
        self.blocks.push(ParamBlock { name: name.to_string(), shape, data });
    }

    pub(crate) fn fill(&mut self, name: &str, shape: Vec<usize>, value: f64) {
        let n = shape.iter().product();
        self.blocks.push(ParamBlock { name: name.to_string(), shape, data: vec![value; n] });
    }

    pub(crate) fn block_mut(&mut self, name: &str) -> &mut ParamBlock {
        self.blocks.iter_mut().find(|b| b.name == name).expect("block was just added")
    }
}

/// Parameter handles on a tape, looked up by block name.
pub(crate) struct Params<'a> {
    blocks: &'a [ParamBlock],
    vars: Vec<Var>,
}

impl Params<'_> {
    pub(crate) fn get(&self, name: &str) -> Var {
        let i = self.blocks.iter().position(|b| b.name == name).unwrap_or_else(|| panic!("no parameter block {name}"));
        self.vars[i]
    }
}

/// Samples per tape in batched inference. Fixed so results never depend on
/// the worker count.
pub const INFERENCE_CHUNK: usize = 16;

/// Options for a loss/gradient evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossOptions {
    pub precision: Precision,
    /// Samples per tape; chunks are evaluated in parallel and reduced in
    /// order. `0` uses one tape for the whole batch.
    pub chunk: usize,
    pub fault: Option<Fault>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    blocks: Vec<ParamBlock>,
    input_scale: Vec<f64>,
}

impl Model {
    /// Builds a model with parameters drawn from `seed`.
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Model, NnError> {
        spec.validate()?;
        let mut b = Builder { rng: ChaCha8Rng::seed_from_u64(seed), blocks: Vec::new() };
        let width = match spec.arch {
            Architecture::Cnn { channels, kernel, pool } => cnn::params(&mut b, spec.frames, channels, kernel, pool),
            Architecture::BiLstm { hidden } => bilstm::params(&mut b, hidden),
            Architecture::ConvLstm { channels, kernel, stride, pool } => convlstm::params(&mut b, channels, kernel, stride, pool),
            Architecture::StGcn { channels, temporal_kernel, .. } => stgcn::params(&mut b, channels, temporal_kernel),
            Architecture::Transformer { dim, layers, heads: _, ff } => transformer::params(&mut b, dim, layers, ff),
        };
        b.glorot("head.fc1.w", vec![width, spec.head_hidden], width, spec.head_hidden);
        b.fill("head.fc1.b", vec![spec.head_hidden], 0.0);
        b.glorot("head.fc2.w", vec![spec.head_hidden, NUM_CLASSES], spec.head_hidden, NUM_CLASSES);
        b.fill("head.fc2.b", vec![NUM_CLASSES], 0.0);
        Ok(Model { spec: *spec, blocks: b.blocks, input_scale: vec![1.0; spec.scale_len()] })
    }

    /// Reassembles a model from stored parameters.
    pub fn from_parts(spec: ModelSpec, blocks: Vec<ParamBlock>, input_scale: Vec<f64>) -> Result<Model, NnError> {
        let reference = Model::build(&spec, 0)?;
        if reference.blocks.len() != blocks.len() {
            return Err(NnError::Spec(format!("expected {} parameter blocks, got {}", reference.blocks.len(), blocks.len())));
        }
        for (r, b) in reference.blocks.iter().zip(&blocks) {
            if r.name != b.name || r.shape != b.shape || b.data.len() != r.data.len() {
                return Err(NnError::Spec(format!("parameter block {} {:?} does not match expected {} {:?}", b.name, b.shape, r.name, r.shape)));
            }
        }
        let mut m = Model { spec, blocks, input_scale: Vec::new() };
        m.set_input_scale(input_scale)?;
        Ok(m)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [ParamBlock] {
        &mut self.blocks
    }

    pub fn param_count(&self) -> usize {
        self.blocks.iter().map(|b| b.data.len()).sum()
    }

    /// Per-feature multipliers applied to every input before the first layer.
    pub fn input_scale(&self) -> &[f64] {
        &self.input_scale
    }

    pub fn set_input_scale(&mut self, scale: Vec<f64>) -> Result<(), NnError> {
        if scale.len() != self.spec.scale_len() || scale.iter().any(|s| !s.is_finite()) {
            return Err(NnError::Spec(format!("input scale needs {} finite values, got {}", self.spec.scale_len(), scale.len())));
        }
        self.input_scale = scale;
        Ok(())
    }

    /// Class probabilities of one input.
    pub fn forward(&self, input: &ModelInput) -> Result<Vec<f64>, NnError> {
        Ok(self.forward_batch(std::slice::from_ref(input))?.remove(0))
    }

    /// Class probabilities of every input, evaluated in fixed chunks.
    pub fn forward_batch(&self, inputs: &[ModelInput]) -> Result<Vec<Vec<f64>>, NnError> {
        self.forward_batch_with(inputs, Precision::F64)
    }

    pub fn forward_batch_with(&self, inputs: &[ModelInput], precision: Precision) -> Result<Vec<Vec<f64>>, NnError> {
        for x in inputs {
            self.check_input(x)?;
        }
        let chunks: Vec<Vec<Vec<f64>>> = inputs
            .par_chunks(INFERENCE_CHUNK)
            .map(|chunk| match precision {
                Precision::F64 => self.probabilities::<f64>(chunk),
                Precision::F32 => self.probabilities::<f32>(chunk),
            })
            .collect();
        Ok(chunks.into_iter().flatten().collect())
    }

    fn probabilities<R: Real>(&self, inputs: &[ModelInput]) -> Vec<Vec<f64>> {
        let mut t = Tape::<R>::new();
        let logits = self.logits(&mut t, inputs);
        let p = t.softmax(logits);
        t.value(p).chunks(NUM_CLASSES).map(|r| r.iter().map(|v| v.to_f64()).collect()).collect()
    }

    /// Pre-softmax scores of every input.
    pub fn logits_batch(&self, inputs: &[ModelInput]) -> Result<Vec<Vec<f64>>, NnError> {
        for x in inputs {
            self.check_input(x)?;
        }
        let mut t = Tape::<f64>::new();
        let logits = self.logits(&mut t, inputs);
        Ok(t.value(logits).chunks(NUM_CLASSES).map(<[f64]>::to_vec).collect())
    }

    /// Architecture output before the shared head, one row per input.
    pub fn representation(&self, inputs: &[ModelInput]) -> Result<Vec<Vec<f64>>, NnError> {
        for x in inputs {
            self.check_input(x)?;
        }
        let mut t = Tape::<f64>::new();
        let features = self.body(&mut t, inputs);
        let width = *t.shape(features).last().unwrap();
        Ok(t.value(features).chunks(width).map(<[f64]>::to_vec).collect())
    }

    /// Mean cross-entropy and its gradient for every parameter block, in
    /// 64-bit precision on a single tape.
    pub fn loss_and_grads(&self, inputs: &[ModelInput], labels: &[usize]) -> Result<(f64, Vec<Vec<f64>>), NnError> {
        self.loss_and_grads_with(inputs, labels, &LossOptions::default())
    }

    pub fn loss_and_grads_with(
        &self,
        inputs: &[ModelInput],
        labels: &[usize],
        opts: &LossOptions,
    ) -> Result<(f64, Vec<Vec<f64>>), NnError> {
        if inputs.is_empty() {
            return Err(NnError::Argument("empty batch".into()));
        }
        if inputs.len() != labels.len() {
            return Err(NnError::Argument(format!("{} inputs but {} labels", inputs.len(), labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= NUM_CLASSES) {
            return Err(NnError::Argument(format!("label {bad} outside [0, {NUM_CLASSES})")));
        }
        for x in inputs {
            self.check_input(x)?;
        }
        let chunk = if opts.chunk == 0 { inputs.len() } else { opts.chunk };
        let parts: Vec<(f64, Vec<Vec<f64>>)> = inputs
            .par_chunks(chunk)
            .zip(labels.par_chunks(chunk))
            .map(|(x, y)| match opts.precision {
                Precision::F64 => self.chunk_grads::<f64>(x, y, opts.fault),
                Precision::F32 => self.chunk_grads::<f32>(x, y, opts.fault),
            })
            .collect();
        // Each chunk holds a mean over its samples; reweight to the batch mean.
        let n = inputs.len() as f64;
        let mut loss = 0.0;
        let mut grads: Vec<Vec<f64>> = self.blocks.iter().map(|b| vec![0.0; b.data.len()]).collect();
        for ((l, g), x) in parts.into_iter().zip(inputs.chunks(chunk)) {
            let w = x.len() as f64 / n;
            loss += w * l;
            for (acc, part) in grads.iter_mut().zip(g) {
                acc.iter_mut().zip(part).for_each(|(a, p)| *a += w * p);
            }
        }
        Ok((loss, grads))
    }

    fn chunk_grads<R: Real>(&self, inputs: &[ModelInput], labels: &[usize], fault: Option<Fault>) -> (f64, Vec<Vec<f64>>) {
        let mut t = Tape::<R>::with_fault(fault);
        let logits = self.logits(&mut t, inputs);
        let loss = t.cross_entropy(logits, labels);
        let g = t.backward(loss);
        let grads = self
            .blocks
            .iter()
            .enumerate()
            .map(|(i, b)| t.param_grad(&g, i, b.data.len()).into_iter().map(|v| v.to_f64()).collect())
            .collect();
        (t.value(loss)[0].to_f64(), grads)
    }

    /// Loss only, with the kink signature of the forward pass.
    pub(crate) fn loss_with_signature(&self, inputs: &[ModelInput], labels: &[usize]) -> (f64, u64) {
        let mut t = Tape::<f64>::new().track_kinks();
        let logits = self.logits(&mut t, inputs);
        let loss = t.cross_entropy(logits, labels);
        (t.value(loss)[0], t.kink_signature().expect("tracking enabled"))
    }

    fn check_input(&self, x: &ModelInput) -> Result<(), NnError> {
        let expected = self.spec.input_shape();
        let got = x.shape();
        let size_ok = x.values().len() == expected.iter().product::<usize>();
        if x.form() != self.spec.input_form() || got != expected || !size_ok {
            return Err(NnError::Shape {
                expected: format!("{} {:?}", self.spec.input_form(), expected),
                got: format!("{} {:?}", x.form(), got),
            });
        }
        if x.values().iter().any(|v| !v.is_finite()) {
            return Err(NnError::Input("input contains NaN or infinite values".into()));
        }
        if let ModelInput::Graph { adjacency, .. } = x {
            if adjacency.len() != NODES_PER_FRAME * NODES_PER_FRAME || adjacency.iter().any(|v| !v.is_finite()) {
                return Err(NnError::Input(format!("adjacency must hold {} finite values", NODES_PER_FRAME * NODES_PER_FRAME)));
            }
        }
        Ok(())
    }

    fn params<'a, R: Real>(&'a self, t: &mut Tape<R>) -> Params<'a> {
        let vars = self
            .blocks
            .iter()
            .enumerate()
            .map(|(i, b)| t.param(i, b.shape.clone(), b.data.iter().map(|v| R::from_f64(*v)).collect()))
            .collect();
        Params { blocks: &self.blocks, vars }
    }

    /// Stacks inputs into the batch tensor layout of the architecture, with
    /// the input scale applied.
    fn batch_input<R: Real>(&self, t: &mut Tape<R>, inputs: &[ModelInput]) -> (Var, Option<Var>) {
        let b = inputs.len();
        let frames = self.spec.frames;
        let s = &self.input_scale;
        match self.spec.input_form() {
            InputForm::DescriptorImage => {
                // HWC samples to [B, C, H, W].
                let (h, w, c) = (frames, DESCRIPTOR_COLS, DESCRIPTOR_CHANNELS);
                let mut out = vec![R::ZERO; b * c * h * w];
                for (n, x) in inputs.iter().enumerate() {
                    let v = x.values();
                    for row in 0..h {
                        for col in 0..w {
                            for ch in 0..c {
                                let k = col * c + ch;
                                out[((n * c + ch) * h + row) * w + col] = R::from_f64(v[row * w * c + k] * s[k]);
                            }
                        }
                    }
                }
                (t.input(vec![b, c, h, w], out), None)
            }
            InputForm::FeatureMatrix => {
                let out = inputs
                    .iter()
                    .flat_map(|x| x.values().chunks(NUM_FEATURES).flat_map(|row| row.iter().zip(s).map(|(v, k)| R::from_f64(v * k))))
                    .collect();
                (t.input(vec![b, frames, NUM_FEATURES], out), None)
            }
            InputForm::InteractionGraph => {
                let per_channel = frames * NODES_PER_FRAME;
                let mut nodes = Vec::with_capacity(b * NODE_FEATURES * per_channel);
                let mut adj = Vec::with_capacity(b * NODES_PER_FRAME * NODES_PER_FRAME);
                for x in inputs {
                    let ModelInput::Graph { nodes: xn, adjacency, .. } = x else { unreachable!("checked input form") };
                    for (c, chunk) in xn.chunks(per_channel).enumerate() {
                        nodes.extend(chunk.iter().map(|v| R::from_f64(v * s[c])));
                    }
                    adj.extend(normalized_adjacency(adjacency).into_iter().map(R::from_f64));
                }
                let x = t.input(vec![b, NODE_FEATURES, frames, NODES_PER_FRAME], nodes);
                let a = t.input(vec![b, NODES_PER_FRAME, NODES_PER_FRAME], adj);
                (x, Some(a))
            }
        }
    }

    /// Architecture body: `[B, width]` features before the head.
    fn body<R: Real>(&self, t: &mut Tape<R>, inputs: &[ModelInput]) -> Var {
        let p = self.params(t);
        let (x, adjacency) = self.batch_input(t, inputs);
        self.body_from(t, &p, x, adjacency)
    }

    fn body_from<R: Real>(&self, t: &mut Tape<R>, p: &Params, x: Var, adjacency: Option<Var>) -> Var {
        match self.spec.arch {
            Architecture::Cnn { pool, .. } => cnn::forward(t, p, x, pool),
            Architecture::BiLstm { hidden } => bilstm::forward(t, p, x, hidden),
            Architecture::ConvLstm { channels, kernel, stride, pool } => convlstm::forward(t, p, x, channels, kernel, stride, pool),
            Architecture::StGcn { temporal_kernel, temporal_stride, .. } => {
                let nodes = stgcn::node_features(t, p, x, adjacency.expect("graph input"), temporal_kernel, temporal_stride);
                stgcn::pool(t, nodes)
            }
            Architecture::Transformer { dim, layers, heads, .. } => transformer::forward(t, p, x, dim, layers, heads),
        }
    }

    fn logits<R: Real>(&self, t: &mut Tape<R>, inputs: &[ModelInput]) -> Var {
        let p = self.params(t);
        let (x, adjacency) = self.batch_input(t, inputs);
        let features = self.body_from(t, &p, x, adjacency);
        head(t, &p, features)
    }

    /// Per-node output of the last graph block, `[channels][frames / stride][64]`
    /// per input. Only for graph models.
    pub fn graph_node_features(&self, inputs: &[ModelInput]) -> Result<Vec<Vec<f64>>, NnError> {
        let Architecture::StGcn { temporal_kernel, temporal_stride, .. } = self.spec.arch else {
            return Err(NnError::Argument("graph_node_features needs an stgcn model".into()));
        };
        for x in inputs {
            self.check_input(x)?;
        }
        let mut t = Tape::<f64>::new();
        let p = self.params(&mut t);
        let (x, a) = self.batch_input(&mut t, inputs);
        let nodes = stgcn::node_features(&mut t, &p, x, a.unwrap(), temporal_kernel, temporal_stride);
        let per = t.value(nodes).len() / inputs.len();
        Ok(t.value(nodes).chunks(per).map(<[f64]>::to_vec).collect())
    }
}

/// Shared head: FC → ReLU → FC to class scores.
fn head<R: Real>(t: &mut Tape<R>, p: &Params, x: Var) -> Var {
    let h = t.matmul(x, p.get("head.fc1.w"));
    let h = t.add_bias(h, p.get("head.fc1.b"));
    let h = t.relu(h);
    let y = t.matmul(h, p.get("head.fc2.w"));
    t.add_bias(y, p.get("head.fc2.b"))
}

/// One LSTM-style gate update shared by the recurrent models: splits `gates`
/// `[B, 4·n]` into input, forget, candidate and output groups and returns the
/// new `(h, c)`, each `[B, n]`.
pub(crate) fn lstm_cell<R: Real>(t: &mut Tape<R>, gates: Var, c_prev: Option<Var>, n: usize) -> (Var, Var) {
    let i = t.slice_cols(gates, 0, n);
    let i = t.sigmoid(i);
    let g = t.slice_cols(gates, 2 * n, n);
    let g = t.tanh(g);
    let o = t.slice_cols(gates, 3 * n, n);
    let o = t.sigmoid(o);
    let mut c = t.mul(i, g);
    if let Some(prev) = c_prev {
        let f = t.slice_cols(gates, n, n);
        let f = t.sigmoid(f);
        let kept = t.mul(f, prev);
        c = t.add(c, kept);
    }
    let tc = t.tanh(c);
    let h = t.mul(o, tc);
    (h, c)
}
