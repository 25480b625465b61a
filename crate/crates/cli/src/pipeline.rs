//! synth, extract and encode.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use dyadkit_core::capture::{parse_capture, write_capture};
use dyadkit_core::features::{decode_features, encode_features, extract_features, features_to_csv};
use dyadkit_core::manifest::{Manifest, ManifestEntry};
use dyadkit_core::representations::{
    build_descriptor, build_graph_from_features, encode_descriptor, encode_graph, export_png,
};
use dyadkit_core::synth::generate_dataset;
use dyadkit_core::DyadSample;
use dyadkit_harness::dataset::{DESCRIPTOR_EXT, FEATURE_EXT, GRAPH_EXT};
use rayon::prelude::*;

use crate::args::{CaptureFormat, EncodeArgs, EncodeForm, ExtractArgs, SynthArgs};
use crate::config::RunConfig;
use crate::{CmdResult, Failure};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CAPTURE_DIR: &str = "captures";

pub fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::failed(format!("{}: {e}", dir.display())))
}

pub fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure::failed(format!("{}: {e}", path.display())))
}

pub fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::failed(format!("{}: {e}", path.display())))
}

/// Regular files in `dir` (not recursive) whose extension is in `exts`,
/// sorted by name. A file path is returned as is.
pub fn list_inputs(path: &Path, exts: &[&str]) -> Result<Vec<PathBuf>, Failure> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    if !path.is_dir() {
        return Err(Failure::usage(format!("{} does not exist", path.display())));
    }
    let mut out: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Failure::failed(format!("{}: {e}", path.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().and_then(|e| e.to_str()).is_some_and(|e| exts.contains(&e)))
        .collect();
    out.sort();
    if out.is_empty() {
        return Err(Failure::failed(format!("no .{} files in {}", exts.join("/."), path.display())));
    }
    Ok(out)
}

pub fn synth(args: SynthArgs, mut cfg: RunConfig) -> CmdResult {
    let out = args.out.or(cfg.data_dir.clone()).ok_or_else(|| Failure::usage("synth needs --out (or data_dir in the config)"))?;
    let s = &mut cfg.synth;
    if let Some(v) = args.pairs {
        s.n_pairs = v;
    }
    if let Some(v) = args.reps {
        s.reps_per_class = v;
    }
    if let Some(v) = args.occlusion_rate {
        s.occlusion_rate = v;
    }
    if let Some(v) = args.noise {
        s.noise_std_mm = v;
    }
    s.validate().map_err(Failure::usage)?;
    let data = generate_dataset(s).map_err(Failure::failed)?;

    let ext = match args.format {
        CaptureFormat::Binary => "dyad",
        CaptureFormat::Jsonl => "jsonl",
    };
    let captures = out.join(CAPTURE_DIR);
    create_dir(&captures)?;
    let mut by_pair: BTreeMap<&str, Vec<DyadSample>> = BTreeMap::new();
    for smp in &data.samples {
        by_pair.entry(smp.pair_id.as_str()).or_default().push(smp.clone());
    }
    by_pair.par_iter().try_for_each(|(pair, samples)| {
        let path = captures.join(format!("{pair}.{ext}"));
        write_capture(&path, samples).map_err(|e| Failure::failed(format!("{}: {e}", path.display())))
    })?;

    let mut manifest = data.manifest;
    for e in manifest.samples.iter_mut() {
        e.file = Some(format!("{CAPTURE_DIR}/{}.{ext}", e.pair_id));
    }
    write(&out.join(MANIFEST_FILE), manifest.to_json() + "\n")?;
    let resolved = serde_json::to_string_pretty(&cfg.synth).expect("config serializes") + "\n";
    write(&out.join("synth_config.json"), resolved)?;
    let occluded = manifest.samples.iter().filter(|e| e.occluded).count();
    eprintln!(
        "wrote {} samples ({occluded} occluded) from {} pairs to {}",
        manifest.samples.len(),
        by_pair.len(),
        out.display()
    );
    Ok(())
}

pub fn extract(args: ExtractArgs) -> CmdResult {
    let files = list_inputs(&args.input, &["dyad", "jsonl"])?;
    let mut samples = Vec::new();
    let mut sources = Vec::new();
    for f in &files {
        let parsed = parse_capture(f).map_err(|e| Failure::failed(format!("{}: {e}", f.display())))?;
        let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        sources.extend(std::iter::repeat_n(name, parsed.len()));
        samples.extend(parsed);
    }
    let mut seen = BTreeSet::new();
    for s in &samples {
        if !seen.insert(s.sample_id.as_str()) {
            return Err(Failure::failed(format!("sample `{}` appears more than once", s.sample_id)));
        }
        if s.sample_id.is_empty() || s.sample_id.contains(['/', '\\']) || s.sample_id.starts_with('.') {
            return Err(Failure::failed(format!("sample id `{}` cannot be used as a file name", s.sample_id)));
        }
    }
    create_dir(&args.out)?;
    samples.par_iter().try_for_each(|s| {
        let m = extract_features(s).map_err(|e| Failure::failed(format!("sample `{}`: {e}", s.sample_id)))?;
        write(&args.out.join(format!("{}.{FEATURE_EXT}", s.sample_id)), encode_features(&m))?;
        if args.csv {
            write(&args.out.join(format!("{}.csv", s.sample_id)), features_to_csv(&m))?;
        }
        Ok(())
    })?;
    let entries = samples
        .iter()
        .zip(sources)
        .map(|(s, file)| ManifestEntry {
            sample_id: s.sample_id.clone(),
            label: s.label,
            pair_id: s.pair_id.clone(),
            occluded: s.is_occluded(),
            instigator_first: None,
            split: None,
            file: Some(file),
        })
        .collect();
    write(&args.out.join(MANIFEST_FILE), Manifest::new(entries).to_json() + "\n")?;
    eprintln!("extracted {} samples from {} capture files into {}", samples.len(), files.len(), args.out.display());
    Ok(())
}

pub fn encode(args: EncodeArgs) -> CmdResult {
    let files = list_inputs(&args.input, &[FEATURE_EXT])?;
    create_dir(&args.out)?;
    files.par_iter().try_for_each(|f| {
        let stem = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let m = decode_features(&read(f)?).map_err(|e| Failure::failed(format!("{}: {e}", f.display())))?;
        match args.form {
            EncodeForm::Descriptor => {
                write(&args.out.join(format!("{stem}.{DESCRIPTOR_EXT}")), encode_descriptor(&build_descriptor(&m)))
            }
            EncodeForm::Graph => {
                write(&args.out.join(format!("{stem}.{GRAPH_EXT}")), encode_graph(&build_graph_from_features(&m)))
            }
            EncodeForm::Png => {
                let path = args.out.join(format!("{stem}.png"));
                export_png(&build_descriptor(&m), &path)
                    .map(|_| ())
                    .map_err(|e| Failure::failed(format!("{}: {e}", path.display())))
            }
        }
    })?;
    eprintln!("encoded {} feature files into {}", files.len(), args.out.display());
    Ok(())
}
