//! Benchmark results and their JSON, text and CSV renderings.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use dyadkit_core::skeleton::{InteractionLabel, NUM_CLASSES};
use dyadkit_nn::{Model, ModelKind, ModelSpec, Precision};
use serde::{Deserialize, Serialize};

use crate::{BenchmarkRun, Condition, Evaluation, HarnessError, TrainConfig, TrainLog};

pub const REPORT_VERSION: u32 = 1;

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TABLE: &str = "report.txt";
pub const REPORT_CSV: &str = "report.csv";
pub const CHART_CSV: &str = "chart.csv";
pub const TIMINGS_JSON: &str = "timings.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Test samples by subject order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectOrder {
    pub instigator_first: usize,
    pub receiver_first: usize,
    pub unknown: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class: InteractionLabel,
    pub samples: u64,
    /// Recall on this class; 0 when `samples` is 0.
    pub accuracy: f64,
    /// No test samples of this class.
    pub empty: bool,
}

/// Per-class recall with empty classes flagged.
pub fn class_accuracies(evaluation: &Evaluation) -> Vec<ClassAccuracy> {
    evaluation
        .per_class()
        .into_iter()
        .enumerate()
        .map(|(c, acc)| ClassAccuracy {
            class: InteractionLabel::from_class_id(c).expect("class index in range"),
            samples: evaluation.class_count(c),
            accuracy: acc.unwrap_or(0.0),
            empty: acc.is_none(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub model: ModelKind,
    pub condition: Condition,
    pub test_accuracy: f64,
    pub per_class: Vec<ClassAccuracy>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub samples: SplitCounts,
    pub test_subject_order: SubjectOrder,
    pub parameters: usize,
    pub precision: Precision,
    pub seed: u64,
}

impl TrainReport {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        spec: &ModelSpec,
        model: &Model,
        condition: Condition,
        evaluation: &Evaluation,
        log: &TrainLog,
        samples: SplitCounts,
        test_subject_order: SubjectOrder,
        cfg: &TrainConfig,
    ) -> Self {
        let per_class = class_accuracies(evaluation);
        TrainReport {
            model: spec.kind(),
            condition,
            test_accuracy: evaluation.accuracy(),
            per_class,
            confusion: evaluation.confusion.clone(),
            epochs: log.epochs(),
            best_epoch: log.best_epoch,
            best_val_accuracy: log.best_val_accuracy,
            samples,
            test_subject_order,
            parameters: model.param_count(),
            precision: cfg.precision,
            seed: cfg.seed,
        }
    }

    fn column(&self) -> String {
        format!("{}/{}", self.model.display_name(), self.condition)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub report_version: u32,
    pub reports: Vec<TrainReport>,
}

pub fn render_json(reports: &[TrainReport]) -> String {
    let file = ReportFile { report_version: REPORT_VERSION, reports: reports.to_vec() };
    let mut s = serde_json::to_string_pretty(&file).expect("report serializes");
    s.push('\n');
    s
}

pub fn parse_json(text: &str) -> Result<ReportFile, HarnessError> {
    let file: ReportFile = serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("report: {e}")))?;
    if file.report_version != REPORT_VERSION {
        return Err(HarnessError::Config(format!("unsupported report_version {}", file.report_version)));
    }
    Ok(file)
}

const EMPTY_MARK: &str = "*";

pub fn render_table(reports: &[TrainReport]) -> String {
    let mut s = String::new();
    let name_w = reports.iter().map(|r| r.model.display_name().len()).max().unwrap_or(5).max(5);
    s.push_str("Test accuracy by model and occlusion condition\n\n");
    let _ = writeln!(
        s,
        "{:<name_w$}  {:<9}  {:>8}  {:>6}  {:>4}  {:>5}  {:>5}  {:>5}  {:>10}",
        "Model", "Condition", "Accuracy", "Epochs", "Best", "Train", "Val", "Test", "Parameters"
    );
    for r in reports {
        let _ = writeln!(
            s,
            "{:<name_w$}  {:<9}  {:>8.4}  {:>6}  {:>4}  {:>5}  {:>5}  {:>5}  {:>10}",
            r.model.display_name(),
            r.condition.id(),
            r.test_accuracy,
            r.epochs,
            r.best_epoch,
            r.samples.train,
            r.samples.val,
            r.samples.test,
            r.parameters
        );
    }

    let mut conditions: Vec<Condition> = reports.iter().map(|r| r.condition).collect();
    conditions.sort();
    conditions.dedup();
    s.push('\n');
    for c in conditions {
        let mut ranked: Vec<&TrainReport> = reports.iter().filter(|r| r.condition == c).collect();
        ranked.sort_by(|a, b| b.test_accuracy.total_cmp(&a.test_accuracy));
        let order: Vec<String> = ranked.iter().map(|r| format!("{} {:.4}", r.model.display_name(), r.test_accuracy)).collect();
        let _ = writeln!(s, "Ranking ({c}): {}", order.join(" > "));
    }

    s.push_str("\nPer-class test accuracy\n\n");
    let class_w = InteractionLabel::ALL.iter().map(|l| l.name().len()).max().unwrap_or(5);
    let cols: Vec<String> = reports.iter().map(TrainReport::column).collect();
    let _ = write!(s, "{:<class_w$}", "Class");
    for c in &cols {
        let _ = write!(s, "  {:>w$}", c, w = c.len().max(7));
    }
    s.push('\n');
    let mut any_empty = false;
    for class in 0..NUM_CLASSES {
        let _ = write!(s, "{:<class_w$}", InteractionLabel::from_class_id(class).expect("class index in range").name());
        for (r, c) in reports.iter().zip(&cols) {
            let entry = &r.per_class[class];
            let cell = if entry.empty {
                any_empty = true;
                format!("{:.4}{EMPTY_MARK}", entry.accuracy)
            } else {
                format!("{:.4}", entry.accuracy)
            };
            let _ = write!(s, "  {:>w$}", cell, w = c.len().max(7));
        }
        s.push('\n');
    }
    if any_empty {
        let _ = writeln!(s, "\n{EMPTY_MARK} no test samples of this class; shown as 0");
    }
    s
}

pub fn render_csv(reports: &[TrainReport]) -> String {
    let mut s = String::from("model,condition,test_accuracy,epochs,best_epoch,train_samples,val_samples,test_samples,parameters");
    for label in InteractionLabel::ALL {
        let _ = write!(s, ",{}", label.name());
    }
    s.push_str(",empty_classes\n");
    for r in reports {
        let _ = write!(
            s,
            "{},{},{:.6},{},{},{},{},{},{}",
            r.model.id(),
            r.condition,
            r.test_accuracy,
            r.epochs,
            r.best_epoch,
            r.samples.train,
            r.samples.val,
            r.samples.test,
            r.parameters
        );
        for c in &r.per_class {
            let _ = write!(s, ",{:.6}", c.accuracy);
        }
        let empty: Vec<&str> = r.per_class.iter().filter(|c| c.empty).map(|c| c.class.name()).collect();
        let _ = writeln!(s, ",{}", empty.join(";"));
    }
    s
}

/// Bar-chart data: one row per (model, condition).
pub fn render_chart(reports: &[TrainReport]) -> String {
    let mut s = String::from("model,condition,accuracy\n");
    for r in reports {
        let _ = writeln!(s, "{},{},{:.6}", r.model.display_name(), r.condition, r.test_accuracy);
    }
    s
}

fn write_file(path: PathBuf, contents: &str) -> Result<PathBuf, HarnessError> {
    fs::write(&path, contents).map_err(|e| HarnessError::io(&path, e))?;
    Ok(path)
}

/// Writes the JSON report, the text and CSV tables and the chart data into
/// `dir`. Identical reports give byte-identical files.
pub fn emit_report(reports: &[TrainReport], dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    if reports.is_empty() {
        return Err(HarnessError::Config("no reports to emit".into()));
    }
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    Ok(vec![
        write_file(dir.join(REPORT_JSON), &render_json(reports))?,
        write_file(dir.join(REPORT_TABLE), &render_table(reports))?,
        write_file(dir.join(REPORT_CSV), &render_csv(reports))?,
        write_file(dir.join(CHART_CSV), &render_chart(reports))?,
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub model: ModelKind,
    pub condition: Condition,
    pub epochs: usize,
    pub wall_seconds: f64,
    pub seconds_per_epoch: f64,
}

/// Wall-clock times, kept apart from the reports so those stay reproducible.
pub fn write_timings(runs: &[BenchmarkRun], path: &Path) -> Result<(), HarnessError> {
    let timings: Vec<Timing> = runs
        .iter()
        .map(|r| Timing {
            model: r.report.model,
            condition: r.report.condition,
            epochs: r.log.epochs(),
            wall_seconds: r.log.wall_seconds,
            seconds_per_epoch: r.log.wall_seconds / r.log.epochs().max(1) as f64,
        })
        .collect();
    let text = serde_json::to_string_pretty(&timings).expect("timings serialize") + "\n";
    write_file(path.to_path_buf(), &text).map(|_| ())
}
