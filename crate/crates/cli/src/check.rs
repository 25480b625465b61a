//! gradcheck and validate.

use std::fs;
use std::path::{Path, PathBuf};

use dyadkit_core::capture::{parse_capture_bytes, CAPTURE_MAGIC};
use dyadkit_core::features::{decode_features, FEATURE_MAGIC, NUM_FEATURES};
use dyadkit_core::manifest::Manifest;
use dyadkit_core::representations::{
    decode_descriptor_file, decode_graph, EdgeKind, DESCRIPTOR_MAGIC, GRAPH_MAGIC, NODES_PER_FRAME,
};
use dyadkit_core::skeleton::{OcclusionRule, FRAMES_PER_SAMPLE, NUM_JOINTS};
use dyadkit_harness::report::parse_json;
use dyadkit_nn::checkpoint::{self, MAGIC as CHECKPOINT_MAGIC};
use dyadkit_nn::{grad_check, GradCheckConfig, ModelKind, ModelSpec};

use crate::args::{GradcheckArgs, ValidateArgs};
use crate::config::RunConfig;
use crate::pipeline::write;
use crate::{CmdResult, Failure};

pub fn gradcheck(args: GradcheckArgs, seed: Option<u64>) -> CmdResult {
    if !(args.tol > 0.0) || !(args.step > 0.0) || args.frames == 0 || args.batch == 0 || args.entries == 0 {
        return Err(Failure::usage("--tol and --step must be positive; --frames, --batch and --entries at least 1"));
    }
    let kinds = args.models.unwrap_or_else(|| ModelKind::ALL.to_vec());
    let specs: Vec<ModelSpec> = kinds.iter().map(|&k| ModelSpec::new(k).with_frames(args.frames)).collect();
    let mut cfg =
        GradCheckConfig { frames: args.frames, batch: args.batch, entries_per_block: args.entries, step: args.step, ..Default::default() };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let report = grad_check(&specs, args.tol, &cfg).map_err(Failure::failed)?;
    for m in &report.models {
        for b in &m.blocks {
            let ok = b.checked > 0 && b.max_rel_error <= args.tol;
            println!(
                "{:<12} {:<22} checked {:>3}  skipped {:>2}  max rel error {:.3e}  {}",
                m.kind.id(),
                b.name,
                b.checked,
                b.skipped,
                b.max_rel_error,
                if ok { "ok" } else { "FAIL" }
            );
        }
    }
    if let Some(path) = &args.json {
        write(path, serde_json::to_string_pretty(&report).expect("report serializes") + "\n")?;
    }
    let failures = report.failures();
    if failures.is_empty() {
        eprintln!("all {} models pass at tolerance {:e} (max rel error {:.3e})", specs.len(), args.tol, report.max_rel_error());
        Ok(())
    } else {
        let names: Vec<String> = failures.iter().map(|(k, b)| format!("{}:{b}", k.id())).collect();
        Err(Failure::failed(format!("gradient check failed for {}", names.join(", "))))
    }
}

fn check_frames(rows: usize) -> Result<(), String> {
    if rows == FRAMES_PER_SAMPLE {
        Ok(())
    } else {
        Err(format!("expected {FRAMES_PER_SAMPLE} frames, found {rows}"))
    }
}

/// Checks one file. `Ok(None)` means the file type is not recognized.
fn validate_file(path: &Path) -> Result<Option<String>, String> {
    let bytes = fs::read(path).map_err(|e| e.to_string())?;
    let rule = OcclusionRule::default();
    if bytes.starts_with(CAPTURE_MAGIC) {
        let samples = parse_capture_bytes(&bytes, &rule).map_err(|e| e.to_string())?;
        return Ok(Some(format!("binary capture, {} samples", samples.len())));
    }
    if bytes.starts_with(FEATURE_MAGIC) {
        let m = decode_features(&bytes).map_err(|e| e.to_string())?;
        check_frames(m.rows())?;
        return Ok(Some(format!("feature matrix {}×{NUM_FEATURES}", m.rows())));
    }
    if bytes.starts_with(DESCRIPTOR_MAGIC) {
        let d = decode_descriptor_file(&bytes).map_err(|e| e.to_string())?;
        check_frames(d.rows())?;
        let [h, w, c] = d.shape();
        return Ok(Some(format!("descriptor image {h}×{w}×{c}")));
    }
    if bytes.starts_with(GRAPH_MAGIC) {
        let g = decode_graph(&bytes).map_err(|e| e.to_string())?;
        check_frames(g.frames)?;
        let t = g.frames;
        let expected = [
            ("nodes", g.nodes.len(), t * NODES_PER_FRAME),
            ("natural edges", g.count(EdgeKind::Natural), t * 2 * (NUM_JOINTS - 1)),
            ("temporal edges", g.count(EdgeKind::Temporal), (t - 1) * NODES_PER_FRAME),
            ("inter-body edges", g.count(EdgeKind::Interbody), t),
        ];
        for (what, got, want) in expected {
            if got != want {
                return Err(format!("expected {want} {what}, found {got}"));
            }
        }
        return Ok(Some(format!("interaction graph, {} nodes, {} edges", g.nodes.len(), g.edges.len())));
    }
    if bytes.starts_with(CHECKPOINT_MAGIC) {
        let m = checkpoint::decode(&bytes).map_err(|e| e.to_string())?;
        return Ok(Some(format!("{} checkpoint, {} parameters", m.spec().kind().id(), m.param_count())));
    }
    let Ok(text) = std::str::from_utf8(&bytes) else { return Ok(None) };
    let is_jsonl = path.extension().is_some_and(|e| e == "jsonl");
    if !is_jsonl {
        if let Ok(value) = serde_json::from_str::<serde_json::Value>(text) {
            if value.get("report_version").is_some() {
                let r = parse_json(text).map_err(|e| e.to_string())?;
                return Ok(Some(format!("report, {} entries", r.reports.len())));
            }
            if value.get("samples").is_some() && value.get("version").is_some() {
                let m = Manifest::from_json(text).map_err(|e| e.to_string())?;
                return Ok(Some(format!("manifest, {} samples", m.samples.len())));
            }
            if path.file_name().is_some_and(|n| n == "run_config.json") {
                serde_json::from_str::<RunConfig>(text).map_err(|e| e.to_string())?;
                return Ok(Some("run config".into()));
            }
            if value.get("sample_id").is_none() {
                return Ok(None);
            }
        } else if !text.trim_start().starts_with('{') {
            return Ok(None);
        }
    }
    let samples = parse_capture_bytes(&bytes, &rule).map_err(|e| e.to_string())?;
    Ok(Some(format!("JSON-lines capture, {} samples", samples.len())))
}

fn collect(path: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
        entries.sort();
        for e in entries {
            collect(&e, out)?;
        }
    } else {
        out.push(path.to_path_buf());
    }
    Ok(())
}

pub fn validate(args: ValidateArgs) -> CmdResult {
    let mut files = Vec::new();
    for p in &args.inputs {
        if !p.exists() {
            return Err(Failure::usage(format!("{} does not exist", p.display())));
        }
        collect(p, &mut files).map_err(|e| Failure::failed(format!("{}: {e}", p.display())))?;
    }
    let mut invalid = 0;
    let mut checked = 0;
    for f in &files {
        match validate_file(f) {
            Ok(Some(summary)) => {
                checked += 1;
                println!("ok       {}: {summary}", f.display());
            }
            Ok(None) => println!("skipped  {}: unrecognized file type", f.display()),
            Err(e) => {
                checked += 1;
                invalid += 1;
                println!("invalid  {}: {e}", f.display());
            }
        }
    }
    if invalid > 0 {
        Err(Failure::failed(format!("{invalid} of {checked} files are invalid")))
    } else {
        eprintln!("{checked} files valid");
        Ok(())
    }
}
