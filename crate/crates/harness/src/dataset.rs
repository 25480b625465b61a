//! Samples with their manifest entries and whichever encodings are available.

use std::fs;
use std::path::{Path, PathBuf};

use dyadkit_core::features::{decode_features, extract_features, FeatureMatrix};
use dyadkit_core::manifest::{with_splits, Manifest, ManifestEntry, Split, SplitPlan};
use dyadkit_core::representations::{
    build_descriptor, build_graph_from_features, decode_descriptor_file, decode_graph, DescriptorImage,
    InteractionGraph,
};
use dyadkit_core::DyadSample;
use dyadkit_nn::{InputForm, ModelInput};
use rayon::prelude::*;

use crate::HarnessError;

pub const FEATURE_EXT: &str = "feat";
pub const DESCRIPTOR_EXT: &str = "dimg";
pub const GRAPH_EXT: &str = "grph";

/// Where a dataset's manifest and encoded files live.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPaths {
    pub manifest: PathBuf,
    pub features: PathBuf,
    pub descriptors: PathBuf,
    pub graphs: PathBuf,
}

impl DatasetPaths {
    /// The standard layout under one data directory.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        DatasetPaths {
            manifest: dir.join("manifest.json"),
            features: dir.join("features"),
            descriptors: dir.join("descriptors"),
            graphs: dir.join("graphs"),
        }
    }

    pub fn dir_for(&self, form: InputForm) -> &Path {
        match form {
            InputForm::FeatureMatrix => &self.features,
            InputForm::DescriptorImage => &self.descriptors,
            InputForm::InteractionGraph => &self.graphs,
        }
    }
}

pub fn extension(form: InputForm) -> &'static str {
    match form {
        InputForm::FeatureMatrix => FEATURE_EXT,
        InputForm::DescriptorImage => DESCRIPTOR_EXT,
        InputForm::InteractionGraph => GRAPH_EXT,
    }
}

/// The pipeline command that produces files of `form`.
pub fn producer(form: InputForm) -> &'static str {
    match form {
        InputForm::FeatureMatrix => "dyadkit extract",
        InputForm::DescriptorImage => "dyadkit encode --form descriptor",
        InputForm::InteractionGraph => "dyadkit encode --form graph",
    }
}

/// Graph inputs reduced to what the graph model reads.
#[derive(Debug, Clone, PartialEq)]
struct GraphInput {
    frames: usize,
    nodes: Vec<f32>,
    adjacency: Vec<bool>,
}

impl GraphInput {
    fn new(g: &InteractionGraph) -> Self {
        GraphInput { frames: g.frames, nodes: g.node_tensor(), adjacency: g.frame_adjacency().iter().map(|&a| a != 0.0).collect() }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    manifest: Manifest,
    features: Option<Vec<FeatureMatrix>>,
    descriptors: Option<Vec<DescriptorImage>>,
    graphs: Option<Vec<GraphInput>>,
}

impl Dataset {
    /// Extracts and encodes samples in memory. `manifest` must list the
    /// samples in the same order.
    pub fn from_samples(samples: &[DyadSample], manifest: Manifest) -> Result<Self, HarnessError> {
        check_order(&manifest, samples.iter().map(|s| s.sample_id.as_str()))?;
        let features: Vec<FeatureMatrix> = samples.par_iter().map(extract_features).collect::<Result<_, _>>()?;
        let descriptors = features.par_iter().map(build_descriptor).collect();
        let graphs = features.par_iter().map(|m| GraphInput::new(&build_graph_from_features(m))).collect();
        Ok(Dataset { manifest, features: Some(features), descriptors: Some(descriptors), graphs: Some(graphs) })
    }

    /// Reads the manifest and the encoded files for `forms`. Entries without a
    /// split are assigned one with `plan`. A missing encoding directory is
    /// not an error here; [`Dataset::require`] reports it when a model needs it.
    pub fn load(paths: &DatasetPaths, forms: &[InputForm], plan: &SplitPlan) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(&paths.manifest).map_err(|e| HarnessError::io(&paths.manifest, e))?;
        let mut manifest = Manifest::from_json(&text).map_err(|e| HarnessError::file(&paths.manifest, e))?;
        if manifest.samples.iter().any(|e| e.split.is_none()) {
            manifest = with_splits(&manifest, plan)?;
        }
        let mut ds = Dataset { manifest, features: None, descriptors: None, graphs: None };
        for &form in forms {
            let dir = paths.dir_for(form);
            if !dir.is_dir() {
                continue;
            }
            match form {
                InputForm::FeatureMatrix => {
                    ds.features = Some(ds.read_all(dir, form, |b| Ok(decode_features(b)?))?);
                }
                InputForm::DescriptorImage => {
                    ds.descriptors = Some(ds.read_all(dir, form, |b| Ok(decode_descriptor_file(b)?))?);
                }
                InputForm::InteractionGraph => {
                    ds.graphs = Some(ds.read_all(dir, form, |b| Ok(GraphInput::new(&decode_graph(b)?)))?);
                }
            }
        }
        Ok(ds)
    }

    fn read_all<T: Send>(
        &self,
        dir: &Path,
        form: InputForm,
        decode: impl Fn(&[u8]) -> Result<T, HarnessError> + Sync,
    ) -> Result<Vec<T>, HarnessError> {
        self.manifest
            .samples
            .par_iter()
            .map(|e| {
                let path = dir.join(format!("{}.{}", e.sample_id, extension(form)));
                let bytes = fs::read(&path).map_err(|err| {
                    if err.kind() == std::io::ErrorKind::NotFound {
                        HarnessError::Pipeline(format!(
                            "missing {form} file {}; run `{}` for every sample in the manifest",
                            path.display(),
                            producer(form)
                        ))
                    } else {
                        HarnessError::io(&path, err)
                    }
                })?;
                decode(&bytes).map_err(|err| HarnessError::file(&path, err))
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.manifest.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.samples.is_empty()
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn entry(&self, i: usize) -> &ManifestEntry {
        &self.manifest.samples[i]
    }

    /// Replaces every entry's split with a fresh assignment.
    pub fn assign_splits(&mut self, plan: &SplitPlan) -> Result<(), HarnessError> {
        self.manifest = with_splits(&self.manifest, plan)?;
        Ok(())
    }

    pub fn label(&self, i: usize) -> usize {
        self.manifest.samples[i].label.class_id()
    }

    /// Indices of the samples in `split`, optionally without occluded ones.
    pub fn indices(&self, split: Split, clean_only: bool) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| {
                let e = &self.manifest.samples[i];
                e.split == Some(split) && !(clean_only && e.occluded)
            })
            .collect()
    }

    pub fn has(&self, form: InputForm) -> bool {
        match form {
            InputForm::FeatureMatrix => self.features.is_some(),
            InputForm::DescriptorImage => self.descriptors.is_some(),
            InputForm::InteractionGraph => self.graphs.is_some(),
        }
    }

    /// Fails with a pipeline error naming the missing stage when `form` is
    /// not loaded.
    pub fn require(&self, form: InputForm, model: &str) -> Result<(), HarnessError> {
        if self.has(form) {
            Ok(())
        } else {
            Err(HarnessError::Pipeline(format!(
                "model `{model}` needs {form} inputs but none are loaded; run `{}` first",
                producer(form)
            )))
        }
    }

    pub fn features(&self) -> Option<&[FeatureMatrix]> {
        self.features.as_deref()
    }

    pub fn input(&self, form: InputForm, i: usize) -> Result<ModelInput, HarnessError> {
        let widen = |v: &[f32]| v.iter().map(|&x| x as f64).collect::<Vec<f64>>();
        let missing = || HarnessError::Pipeline(format!("no {form} inputs loaded; run `{}` first", producer(form)));
        Ok(match form {
            InputForm::FeatureMatrix => {
                let m = &self.features.as_ref().ok_or_else(missing)?[i];
                ModelInput::Sequence { rows: m.rows(), data: widen(m.as_slice()) }
            }
            InputForm::DescriptorImage => {
                let d = &self.descriptors.as_ref().ok_or_else(missing)?[i];
                ModelInput::Image { rows: d.rows(), data: widen(d.as_slice()) }
            }
            InputForm::InteractionGraph => {
                let g = &self.graphs.as_ref().ok_or_else(missing)?[i];
                ModelInput::Graph {
                    frames: g.frames,
                    nodes: widen(&g.nodes),
                    adjacency: g.adjacency.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect(),
                }
            }
        })
    }

    pub fn inputs(&self, form: InputForm, indices: &[usize]) -> Result<Vec<ModelInput>, HarnessError> {
        indices.iter().map(|&i| self.input(form, i)).collect()
    }
}

fn check_order<'a>(manifest: &Manifest, ids: impl ExactSizeIterator<Item = &'a str>) -> Result<(), HarnessError> {
    if ids.len() != manifest.samples.len() {
        return Err(HarnessError::Config(format!(
            "manifest lists {} samples, got {}",
            manifest.samples.len(),
            ids.len()
        )));
    }
    for (e, id) in manifest.samples.iter().zip(ids) {
        if e.sample_id != id {
            return Err(HarnessError::Config(format!("manifest entry `{}` does not match sample `{id}`", e.sample_id)));
        }
    }
    Ok(())
}
