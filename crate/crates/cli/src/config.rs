//! Run configuration file. Every key has a command-line flag; flags win.

use std::fs;
use std::path::{Path, PathBuf};

use dyadkit_core::manifest::SplitPlan;
use dyadkit_core::synth::SynthConfig;
use dyadkit_harness::{Condition, TrainConfig};
use dyadkit_nn::{ModelKind, ModelSpec, Precision};
use serde::{Deserialize, Serialize};

use crate::Failure;

/// A model given either by name (default hyperparameters) or in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelEntry {
    Kind(ModelKind),
    Spec(ModelSpec),
}

impl ModelEntry {
    pub fn spec(&self) -> ModelSpec {
        match self {
            ModelEntry::Kind(k) => ModelSpec::new(*k),
            ModelEntry::Spec(s) => *s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    /// Seeds generation, splitting, initialization and batch order. Any
    /// seeds inside the nested sections are replaced by this one.
    pub seed: Option<u64>,
    pub precision: Option<Precision>,
    pub jobs: Option<usize>,
    /// Generator settings. Its `split` is replaced by the top-level one.
    pub synth: SynthConfig,
    pub split: SplitPlan,
    pub models: Vec<ModelEntry>,
    pub conditions: Vec<Condition>,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: None,
            out_dir: None,
            seed: None,
            precision: None,
            jobs: None,
            synth: SynthConfig::default(),
            split: SplitPlan::default(),
            models: ModelKind::ALL.iter().map(|&k| ModelEntry::Kind(k)).collect(),
            conditions: Condition::BOTH.to_vec(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig, Failure> {
        let Some(path) = path else { return Ok(RunConfig::default()) };
        let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))
    }

    /// Applies the resolved seed and precision to the nested sections.
    pub fn resolve(&mut self, seed_flag: Option<u64>, precision_flag: Option<Precision>) {
        let seed = seed_flag.or(self.seed).unwrap_or(0);
        self.seed = Some(seed);
        self.synth.seed = seed;
        self.split.seed = seed;
        self.synth.split = self.split;
        self.train.seed = seed;
        if let Some(p) = precision_flag.or(self.precision) {
            self.precision = Some(p);
            self.train.precision = p;
        }
    }

    pub fn model_specs(&self) -> Vec<ModelSpec> {
        self.models.iter().map(ModelEntry::spec).collect()
    }
}
