use std::fs;

use dyadkit_core::features::{encode_features, zero_occluded};
use dyadkit_core::manifest::{Split, SplitPlan};
use dyadkit_core::representations::{build_descriptor, build_graph_from_features, encode_descriptor, encode_graph};
use dyadkit_core::synth::{generate_dataset, SynthConfig};
use dyadkit_harness::dataset::{DESCRIPTOR_EXT, FEATURE_EXT, GRAPH_EXT};
use dyadkit_harness::{Dataset, DatasetPaths, HarnessError};
use dyadkit_nn::{InputForm, ModelInput};

const FORMS: [InputForm; 3] = [InputForm::FeatureMatrix, InputForm::DescriptorImage, InputForm::InteractionGraph];

fn small() -> (Vec<dyadkit_core::DyadSample>, dyadkit_core::manifest::Manifest) {
    let d = generate_dataset(&SynthConfig { n_pairs: 3, reps_per_class: 1, seed: 5, ..SynthConfig::default() }).unwrap();
    (d.samples, d.manifest)
}

fn write_encodings(dir: &std::path::Path, ds: &Dataset) {
    let paths = DatasetPaths::in_dir(dir);
    for form in FORMS {
        fs::create_dir_all(paths.dir_for(form)).unwrap();
    }
    fs::write(&paths.manifest, ds.manifest().to_json()).unwrap();
    for (i, m) in ds.features().unwrap().iter().enumerate() {
        let id = &ds.entry(i).sample_id;
        fs::write(paths.features.join(format!("{id}.{FEATURE_EXT}")), encode_features(m)).unwrap();
        fs::write(paths.descriptors.join(format!("{id}.{DESCRIPTOR_EXT}")), encode_descriptor(&build_descriptor(m))).unwrap();
        fs::write(paths.graphs.join(format!("{id}.{GRAPH_EXT}")), encode_graph(&build_graph_from_features(m))).unwrap();
    }
}

#[test]
fn files_load_to_the_same_inputs_as_memory() {
    let (samples, manifest) = small();
    let mem = Dataset::from_samples(&samples, manifest).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_encodings(dir.path(), &mem);
    let disk = Dataset::load(&DatasetPaths::in_dir(dir.path()), &FORMS, &SplitPlan::default()).unwrap();
    assert_eq!(disk.manifest(), mem.manifest());
    for form in FORMS {
        for i in 0..mem.len() {
            assert_eq!(disk.input(form, i).unwrap(), mem.input(form, i).unwrap(), "{form} sample {i}");
        }
    }
}

#[test]
fn missing_encoding_names_the_command_to_run() {
    let (samples, manifest) = small();
    let mem = Dataset::from_samples(&samples, manifest).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_encodings(dir.path(), &mem);
    let paths = DatasetPaths::in_dir(dir.path());
    fs::remove_dir_all(&paths.graphs).unwrap();
    let ds = Dataset::load(&paths, &FORMS, &SplitPlan::default()).unwrap();
    assert!(ds.has(InputForm::FeatureMatrix) && !ds.has(InputForm::InteractionGraph));
    let msg = ds.require(InputForm::InteractionGraph, "stgcn").unwrap_err().to_string();
    assert!(msg.contains("stgcn") && msg.contains("dyadkit encode --form graph"), "{msg}");

    let id = &mem.entry(3).sample_id;
    fs::remove_file(paths.descriptors.join(format!("{id}.{DESCRIPTOR_EXT}"))).unwrap();
    let err = Dataset::load(&paths, &[InputForm::DescriptorImage], &SplitPlan::default()).unwrap_err();
    assert!(matches!(err, HarnessError::Pipeline(ref m) if m.contains(id.as_str()) && m.contains("--form descriptor")), "{err}");
}

#[test]
fn corrupt_file_is_reported_with_its_path() {
    let (samples, manifest) = small();
    let mem = Dataset::from_samples(&samples, manifest).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_encodings(dir.path(), &mem);
    let paths = DatasetPaths::in_dir(dir.path());
    let f = paths.features.join(format!("{}.{FEATURE_EXT}", mem.entry(0).sample_id));
    fs::write(&f, b"FEAT0001\x01").unwrap();
    let err = Dataset::load(&paths, &[InputForm::FeatureMatrix], &SplitPlan::default()).unwrap_err();
    assert!(err.to_string().contains(&*f.to_string_lossy()), "{err}");
}

#[test]
fn manifest_without_splits_gets_the_plan() {
    let (samples, mut manifest) = small();
    for e in manifest.samples.iter_mut() {
        e.split = None;
    }
    let mem = Dataset::from_samples(&samples, manifest).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_encodings(dir.path(), &mem);
    let plan = SplitPlan { train: 0.4, val: 0.3, test: 0.3, seed: 2, ..SplitPlan::default() };
    let ds = Dataset::load(&DatasetPaths::in_dir(dir.path()), &[], &plan).unwrap();
    let sizes: Vec<usize> = [Split::Train, Split::Val, Split::Test].iter().map(|&s| ds.indices(s, false).len()).collect();
    assert_eq!(sizes, vec![12, 12, 12]);
}

#[test]
fn clean_indices_drop_occluded_samples() {
    let (samples, manifest) = small();
    let ds = Dataset::from_samples(&samples, manifest).unwrap();
    for split in [Split::Train, Split::Val, Split::Test] {
        let all = ds.indices(split, false);
        let clean = ds.indices(split, true);
        assert!(clean.iter().all(|&i| !ds.entry(i).occluded));
        assert_eq!(all.iter().filter(|&&i| !ds.entry(i).occluded).count(), clean.len());
    }
}

#[test]
fn mismatched_manifest_order_is_rejected() {
    let (samples, mut manifest) = small();
    manifest.samples.swap(0, 1);
    assert!(matches!(Dataset::from_samples(&samples, manifest), Err(HarnessError::Config(_))));
}

#[test]
fn occluded_frames_are_zero_in_every_form() {
    let (samples, manifest) = small();
    let ds = Dataset::from_samples(&samples, manifest).unwrap();
    let i = (0..ds.len()).find(|&i| ds.entry(i).occluded).expect("an occluded sample");
    let m = &ds.features().unwrap()[i];
    let t = *m.occluded_frames.iter().next().unwrap();
    assert_eq!(zero_occluded(m, &m.occluded_frames).unwrap(), *m);
    match ds.input(InputForm::FeatureMatrix, i).unwrap() {
        ModelInput::Sequence { data, .. } => assert!(data[t * 467..(t + 1) * 467].iter().all(|&v| v == 0.0)),
        _ => unreachable!(),
    }
    match ds.input(InputForm::DescriptorImage, i).unwrap() {
        ModelInput::Image { data, .. } => assert!(data[t * 471..(t + 1) * 471].iter().all(|&v| v == 0.0)),
        _ => unreachable!(),
    }
}
