//! Dataset manifests and train/validation/test splitting.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::skeleton::InteractionLabel;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sample_id: String,
    pub label: InteractionLabel,
    pub pair_id: String,
    pub occluded: bool,
    /// Whether subject 1 is the instigator, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instigator_first: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    /// Capture file holding the sample, relative to the manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub samples: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(samples: Vec<ManifestEntry>) -> Self {
        Manifest { version: MANIFEST_VERSION, samples }
    }

    pub fn from_json(text: &str) -> Result<Self, SplitError> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| SplitError::Manifest(e.to_string()))?;
        if m.version != MANIFEST_VERSION {
            return Err(SplitError::Manifest(format!("unsupported manifest version {}", m.version)));
        }
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn in_split(&self, split: Split) -> Manifest {
        Manifest::new(self.samples.iter().filter(|e| e.split == Some(split)).cloned().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitStrategy {
    /// Whole volunteer pairs go to one split.
    ByPair,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub strategy: SplitStrategy,
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitPlan {
    fn default() -> Self {
        SplitPlan { strategy: SplitStrategy::ByPair, train: 0.8, val: 0.1, test: 0.1, seed: 0 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SplitError {
    #[error("invalid split plan: {0}")]
    Plan(String),
    #[error("split configuration: {0}")]
    Config(String),
    #[error("manifest: {0}")]
    Manifest(String),
}

impl SplitPlan {
    pub fn validate(&self) -> Result<(), SplitError> {
        let f = [self.train, self.val, self.test];
        if f.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(SplitError::Plan(format!("fractions must be non-negative, got {f:?}")));
        }
        let sum: f64 = f.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(SplitError::Plan(format!("fractions sum to {sum}, expected 1")));
        }
        Ok(())
    }

    /// Item counts per split for `n` units. Validation and test get their
    /// rounded share but at least one unit when their fraction is positive;
    /// training takes the rest.
    fn counts(&self, n: usize, unit: &str) -> Result<[usize; 3], SplitError> {
        let share = |f: f64| if f > 0.0 { ((f * n as f64).round() as usize).max(1) } else { 0 };
        let val = share(self.val);
        let test = if self.train > 0.0 { share(self.test) } else { n.saturating_sub(val) };
        let wanted = [self.train, self.val, self.test].iter().filter(|f| **f > 0.0).count();
        let min_train = usize::from(self.train > 0.0);
        if val + test + min_train > n {
            return Err(SplitError::Config(format!("{n} {unit} cannot fill {wanted} non-empty splits")));
        }
        Ok([n - val - test, val, test])
    }
}

fn split_of(position: usize, counts: &[usize; 3]) -> Split {
    if position < counts[0] {
        Split::Train
    } else if position < counts[0] + counts[1] {
        Split::Val
    } else {
        Split::Test
    }
}

/// Split assignment for every manifest entry, in manifest order.
pub fn assign_splits(manifest: &Manifest, plan: &SplitPlan) -> Result<Vec<Split>, SplitError> {
    plan.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let n = manifest.samples.len();
    match plan.strategy {
        SplitStrategy::Random => {
            let counts = plan.counts(n, "samples")?;
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let mut out = vec![Split::Train; n];
            for (pos, &i) in order.iter().enumerate() {
                out[i] = split_of(pos, &counts);
            }
            Ok(out)
        }
        SplitStrategy::ByPair => {
            let pairs: BTreeSet<&str> = manifest.samples.iter().map(|e| e.pair_id.as_str()).collect();
            let mut pairs: Vec<&str> = pairs.into_iter().collect();
            let counts = plan.counts(pairs.len(), "pairs")?;
            pairs.shuffle(&mut rng);
            Ok(manifest
                .samples
                .iter()
                .map(|e| split_of(pairs.iter().position(|p| *p == e.pair_id).unwrap(), &counts))
                .collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Manifest,
    pub val: Manifest,
    pub test: Manifest,
}

/// Partitions the manifest into disjoint, exhaustive train/val/test manifests.
pub fn split_dataset(manifest: &Manifest, plan: &SplitPlan) -> Result<Splits, SplitError> {
    let labeled = with_splits(manifest, plan)?;
    Ok(Splits {
        train: labeled.in_split(Split::Train),
        val: labeled.in_split(Split::Val),
        test: labeled.in_split(Split::Test),
    })
}

/// Copy of the manifest with each entry's `split` filled in.
pub fn with_splits(manifest: &Manifest, plan: &SplitPlan) -> Result<Manifest, SplitError> {
    let assignment = assign_splits(manifest, plan)?;
    let mut out = manifest.clone();
    for (e, s) in out.samples.iter_mut().zip(assignment) {
        e.split = Some(s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(pairs: usize, per_pair: usize) -> Manifest {
        let mut samples = Vec::new();
        for p in 0..pairs {
            for i in 0..per_pair {
                samples.push(ManifestEntry {
                    sample_id: format!("p{p:02}-{i:04}"),
                    label: InteractionLabel::ALL[i % 12],
                    pair_id: format!("p{p:02}"),
                    occluded: false,
                    instigator_first: None,
                    split: None,
                    file: None,
                });
            }
        }
        Manifest::new(samples)
    }

    #[test]
    fn random_split_counts() {
        let m = manifest(10, 480);
        let plan = SplitPlan { strategy: SplitStrategy::Random, seed: 3, ..SplitPlan::default() };
        let s = split_dataset(&m, &plan).unwrap();
        assert_eq!((s.train.samples.len(), s.val.samples.len(), s.test.samples.len()), (3840, 480, 480));
        let mut ids: Vec<_> = [&s.train, &s.val, &s.test]
            .iter()
            .flat_map(|x| x.samples.iter().map(|e| e.sample_id.clone()))
            .collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 4800);
    }

    #[test]
    fn by_pair_keeps_pairs_whole() {
        let m = manifest(10, 48);
        let s = split_dataset(&m, &SplitPlan { seed: 11, ..SplitPlan::default() }).unwrap();
        let pairs = |x: &Manifest| x.samples.iter().map(|e| e.pair_id.clone()).collect::<BTreeSet<_>>();
        let (a, b, c) = (pairs(&s.train), pairs(&s.val), pairs(&s.test));
        assert_eq!((a.len(), b.len(), c.len()), (8, 1, 1));
        assert!(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c));
        assert_eq!(s.train.samples.len() + s.val.samples.len() + s.test.samples.len(), 480);
    }

    #[test]
    fn same_seed_same_assignment() {
        let m = manifest(10, 20);
        for strategy in [SplitStrategy::ByPair, SplitStrategy::Random] {
            let plan = SplitPlan { strategy, seed: 42, ..SplitPlan::default() };
            assert_eq!(assign_splits(&m, &plan).unwrap(), assign_splits(&m, &plan).unwrap());
        }
    }

    #[test]
    fn too_few_pairs_is_a_config_error() {
        let m = manifest(2, 10);
        assert!(matches!(split_dataset(&m, &SplitPlan::default()), Err(SplitError::Config(_))));
    }

    #[test]
    fn bad_fractions() {
        let m = manifest(10, 2);
        let plan = SplitPlan { train: 0.9, ..SplitPlan::default() };
        assert!(matches!(split_dataset(&m, &plan), Err(SplitError::Plan(_))));
    }

    #[test]
    fn manifest_json_round_trip() {
        let m = with_splits(&manifest(3, 2), &SplitPlan { train: 0.4, val: 0.3, test: 0.3, ..SplitPlan::default() }).unwrap();
        assert_eq!(Manifest::from_json(&m.to_json()).unwrap(), m);
        assert!(Manifest::from_json("{\"version\":2,\"samples\":[]}").is_err());
    }
}
