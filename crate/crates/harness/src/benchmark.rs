//! The two-condition benchmark: every model trained on the mixed dataset and
//! again with occluded samples removed.

use std::fmt;
use std::str::FromStr;

use dyadkit_core::manifest::Split;
use dyadkit_nn::{Model, ModelSpec, Precision};
use serde::{Deserialize, Serialize};

use crate::report::{SplitCounts, SubjectOrder, TrainReport};
use crate::{evaluate, train_model, Dataset, HarnessError, TrainConfig, TrainLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Occluded and unoccluded samples together.
    Mixed,
    /// Occluded samples removed from every split.
    Clean,
}

impl Condition {
    pub const BOTH: [Condition; 2] = [Condition::Mixed, Condition::Clean];

    pub fn id(self) -> &'static str {
        match self {
            Condition::Mixed => "mixed",
            Condition::Clean => "clean",
        }
    }

    fn clean_only(self) -> bool {
        self == Condition::Clean
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Condition {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mixed" => Ok(Condition::Mixed),
            "clean" => Ok(Condition::Clean),
            _ => Err(HarnessError::Config(format!("unknown condition `{s}` (expected mixed or clean)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub models: Vec<ModelSpec>,
    pub conditions: Vec<Condition>,
    pub train: TrainConfig,
}

/// One trained (model, condition) cell.
#[derive(Debug, Clone)]
pub struct BenchmarkRun {
    pub report: TrainReport,
    pub model: Model,
    pub log: TrainLog,
}

/// Checks that `dataset` can serve every requested run before any training
/// starts.
pub fn check_benchmark(dataset: &Dataset, cfg: &BenchmarkConfig) -> Result<(), HarnessError> {
    if cfg.models.is_empty() || cfg.conditions.is_empty() {
        return Err(HarnessError::Config("benchmark needs at least one model and one condition".into()));
    }
    cfg.train.validate()?;
    for spec in &cfg.models {
        spec.validate()?;
        dataset.require(spec.input_form(), spec.kind().id())?;
    }
    let occluded = dataset.manifest().samples.iter().filter(|e| e.occluded).count();
    if cfg.conditions.contains(&Condition::Mixed) && (occluded == 0 || occluded == dataset.len()) {
        return Err(HarnessError::Config(format!(
            "the mixed condition needs both occluded and unoccluded samples; {occluded} of {} are occluded",
            dataset.len()
        )));
    }
    for &c in &cfg.conditions {
        for split in [Split::Train, Split::Test] {
            if dataset.indices(split, c.clean_only()).is_empty() {
                return Err(HarnessError::Config(format!("the {c} condition has no {} samples", split_name(split))));
            }
        }
    }
    Ok(())
}

fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Val => "validation",
        Split::Test => "test",
    }
}

/// Trains and tests one model under one condition. Testing always runs in
/// 64-bit precision.
pub fn run_one(dataset: &Dataset, spec: &ModelSpec, condition: Condition, cfg: &TrainConfig) -> Result<BenchmarkRun, HarnessError> {
    let clean = condition.clean_only();
    let train = dataset.indices(Split::Train, clean);
    let val = dataset.indices(Split::Val, clean);
    let test = dataset.indices(Split::Test, clean);
    let (model, log) = train_model(spec, dataset, &train, &val, cfg)?;
    let evaluation = evaluate(&model, dataset, &test, Precision::F64)?;
    let mut order = SubjectOrder::default();
    for &i in &test {
        match dataset.entry(i).instigator_first {
            Some(true) => order.instigator_first += 1,
            Some(false) => order.receiver_first += 1,
            None => order.unknown += 1,
        }
    }
    let report = TrainReport::new(
        spec,
        &model,
        condition,
        &evaluation,
        &log,
        SplitCounts { train: train.len(), val: val.len(), test: test.len() },
        order,
        cfg,
    );
    Ok(BenchmarkRun { report, model, log })
}

/// One run per (model, condition), models in the outer loop. Every run uses
/// the same split and seed.
pub fn run_benchmark(dataset: &Dataset, cfg: &BenchmarkConfig) -> Result<Vec<BenchmarkRun>, HarnessError> {
    check_benchmark(dataset, cfg)?;
    let mut runs = Vec::new();
    for spec in &cfg.models {
        for &condition in &cfg.conditions {
            runs.push(run_one(dataset, spec, condition, &cfg.train)?);
        }
    }
    Ok(runs)
}
