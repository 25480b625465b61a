//! train, eval and report.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use dyadkit_core::manifest::Split;
use dyadkit_harness::benchmark::{check_benchmark, run_one};
use dyadkit_harness::report::{class_accuracies, parse_json, render_table, ClassAccuracy, REPORT_JSON, TIMINGS_JSON};
use dyadkit_harness::{emit_report, evaluate, write_timings, BenchmarkConfig, Condition, Dataset, DatasetPaths};
use dyadkit_nn::{checkpoint, InputForm, ModelKind};
use serde::Serialize;

use crate::args::{EvalArgs, ReportArgs, SplitArg, TrainArgs};
use crate::config::{ModelEntry, RunConfig};
use crate::pipeline::{create_dir, read, write};
use crate::{CmdResult, Failure};

pub const CHECKPOINT_DIR: &str = "checkpoints";

pub fn checkpoint_name(kind: ModelKind, condition: Condition) -> String {
    format!("{}-{condition}.modl", kind.id())
}

fn dataset_paths(data: &Path, manifest: Option<PathBuf>) -> Result<DatasetPaths, Failure> {
    let mut paths = DatasetPaths::in_dir(data);
    if let Some(m) = manifest {
        paths.manifest = m;
    }
    if !paths.manifest.is_file() {
        return Err(Failure::usage(format!(
            "manifest {} not found; run `dyadkit synth` or `dyadkit extract` first",
            paths.manifest.display()
        )));
    }
    Ok(paths)
}

#[derive(Serialize)]
struct LogEntry<'a> {
    model: ModelKind,
    condition: Condition,
    log: &'a dyadkit_harness::TrainLog,
}

pub fn train(args: TrainArgs, mut cfg: RunConfig) -> CmdResult {
    let data = args.data.or(cfg.data_dir.clone()).ok_or_else(|| Failure::usage("train needs --data (or data_dir in the config)"))?;
    let out = args.out.or(cfg.out_dir.clone()).ok_or_else(|| Failure::usage("train needs --out (or out_dir in the config)"))?;
    if let Some(kinds) = args.models {
        cfg.models = kinds.into_iter().map(ModelEntry::Kind).collect();
    }
    if let Some(c) = args.conditions {
        cfg.conditions = c;
    }
    let t = &mut cfg.train;
    if let Some(v) = args.epochs {
        t.max_epochs = v;
    }
    if let Some(v) = args.patience {
        t.patience = v;
    }
    if let Some(v) = args.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = args.lr {
        t.optimizer.lr = v;
    }
    if let Some(v) = args.grad_chunk {
        t.grad_chunk = v;
    }
    let seed = cfg.seed;
    cfg.resolve(seed, args.precision);

    let bench = BenchmarkConfig { models: cfg.model_specs(), conditions: cfg.conditions.clone(), train: cfg.train.clone() };
    let forms: BTreeSet<InputForm> = bench.models.iter().map(|s| s.input_form()).collect();
    let forms: Vec<InputForm> = forms.into_iter().collect();
    let paths = dataset_paths(&data, args.manifest)?;
    let dataset = Dataset::load(&paths, &forms, &cfg.split).map_err(Failure::failed)?;
    check_benchmark(&dataset, &bench).map_err(Failure::failed)?;

    let ckpt_dir = out.join(CHECKPOINT_DIR);
    create_dir(&ckpt_dir)?;
    let mut runs = Vec::new();
    for spec in &bench.models {
        for &condition in &bench.conditions {
            let run = run_one(&dataset, spec, condition, &bench.train).map_err(Failure::failed)?;
            checkpoint::save(&run.model, &ckpt_dir.join(checkpoint_name(spec.kind(), condition))).map_err(Failure::failed)?;
            eprintln!(
                "{} / {condition}: test accuracy {:.4} after {} epochs (best {}) in {:.1} s",
                spec.kind().display_name(),
                run.report.test_accuracy,
                run.log.epochs(),
                run.log.best_epoch,
                run.log.wall_seconds
            );
            runs.push(run);
        }
    }
    let reports: Vec<_> = runs.iter().map(|r| r.report.clone()).collect();
    emit_report(&reports, &out).map_err(Failure::failed)?;
    write_timings(&runs, &out.join(TIMINGS_JSON)).map_err(Failure::failed)?;
    let logs: Vec<LogEntry> =
        runs.iter().map(|r| LogEntry { model: r.report.model, condition: r.report.condition, log: &r.log }).collect();
    write(&out.join("train_log.json"), serde_json::to_string_pretty(&logs).expect("logs serialize") + "\n")?;
    let resolved = serde_json::to_string_pretty(&cfg).expect("config serializes") + "\n";
    write(&out.join("run_config.json"), resolved)?;
    eprintln!("wrote {} reports to {}", reports.len(), out.display());
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput {
    model: ModelKind,
    split: String,
    condition: Condition,
    samples: u64,
    accuracy: f64,
    per_class: Vec<ClassAccuracy>,
    confusion: Vec<Vec<u64>>,
}

pub fn eval(args: EvalArgs, cfg: RunConfig) -> CmdResult {
    let data = args.data.or(cfg.data_dir.clone()).ok_or_else(|| Failure::usage("eval needs --data (or data_dir in the config)"))?;
    if !args.checkpoint.is_file() {
        return Err(Failure::usage(format!("checkpoint {} not found", args.checkpoint.display())));
    }
    let model = checkpoint::load(&args.checkpoint).map_err(|e| Failure::failed(format!("{}: {e}", args.checkpoint.display())))?;
    let form = model.spec().input_form();
    let paths = dataset_paths(&data, args.manifest)?;
    let dataset = Dataset::load(&paths, &[form], &cfg.split).map_err(Failure::failed)?;
    dataset.require(form, model.spec().kind().id()).map_err(Failure::failed)?;
    let clean = args.condition == Condition::Clean;
    let indices: Vec<usize> = match args.split {
        SplitArg::Train => dataset.indices(Split::Train, clean),
        SplitArg::Val => dataset.indices(Split::Val, clean),
        SplitArg::Test => dataset.indices(Split::Test, clean),
        SplitArg::All => (0..dataset.len()).filter(|&i| !(clean && dataset.entry(i).occluded)).collect(),
    };
    if indices.is_empty() {
        return Err(Failure::failed("no samples to evaluate"));
    }
    let e = evaluate(&model, &dataset, &indices, args.precision).map_err(Failure::failed)?;
    let output = EvalOutput {
        model: model.spec().kind(),
        split: format!("{:?}", args.split).to_lowercase(),
        condition: args.condition,
        samples: e.total(),
        accuracy: e.accuracy(),
        per_class: class_accuracies(&e),
        confusion: e.confusion.clone(),
    };
    let text = serde_json::to_string_pretty(&output).expect("output serializes") + "\n";
    match args.out {
        Some(path) => write(&path, text)?,
        None => print!("{text}"),
    }
    eprintln!("accuracy {:.4} on {} samples", e.accuracy(), e.total());
    Ok(())
}

pub fn report(args: ReportArgs) -> CmdResult {
    let file = if args.input.is_dir() { args.input.join(REPORT_JSON) } else { args.input.clone() };
    if !file.is_file() {
        return Err(Failure::usage(format!("{} not found", file.display())));
    }
    let text = String::from_utf8(read(&file)?).map_err(|e| Failure::failed(format!("{}: {e}", file.display())))?;
    let parsed = parse_json(&text).map_err(|e| Failure::failed(format!("{}: {e}", file.display())))?;
    let out = args.out.unwrap_or_else(|| file.parent().map(Path::to_path_buf).unwrap_or_default());
    let written = emit_report(&parsed.reports, &out).map_err(Failure::failed)?;
    print!("{}", render_table(&parsed.reports));
    eprintln!("wrote {} files to {}", written.len(), out.display());
    Ok(())
}
