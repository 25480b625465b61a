use dyadkit_harness::report::{
    parse_json, render_chart, render_csv, render_json, render_table, SplitCounts, SubjectOrder, CHART_CSV, REPORT_CSV,
    REPORT_JSON, REPORT_TABLE,
};
use dyadkit_harness::{emit_report, Condition, Evaluation, TrainConfig, TrainLog, TrainReport};
use dyadkit_nn::{Model, ModelKind, ModelSpec};

fn report(kind: ModelKind, condition: Condition, skip_class: Option<usize>) -> TrainReport {
    let spec = ModelSpec::new(kind).with_frames(8);
    let model = Model::build(&spec, 0).unwrap();
    let mut e = Evaluation::empty();
    for c in 0..12 {
        if Some(c) == skip_class {
            continue;
        }
        e.confusion[c][c] += 3;
        e.confusion[c][(c + kind as usize + 1) % 12] += 1;
    }
    let log = TrainLog { history: vec![], best_epoch: 4, best_val_accuracy: 0.75, wall_seconds: 12.5 };
    TrainReport::new(
        &spec,
        &model,
        condition,
        &e,
        &log,
        SplitCounts { train: 100, val: 12, test: e.total() as usize },
        SubjectOrder { instigator_first: 20, receiver_first: 24, unknown: 0 },
        &TrainConfig::default(),
    )
}

fn ten() -> Vec<TrainReport> {
    ModelKind::ALL.iter().flat_map(|&k| Condition::BOTH.map(|c| report(k, c, None))).collect()
}

#[test]
fn ten_reports_emit_one_json_and_one_table() {
    let reports = ten();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&reports, dir.path()).unwrap();
    let names: Vec<_> = files.iter().map(|p| p.file_name().unwrap().to_str().unwrap().to_string()).collect();
    assert_eq!(names, [REPORT_JSON, REPORT_TABLE, REPORT_CSV, CHART_CSV]);
    let parsed = parse_json(&std::fs::read_to_string(dir.path().join(REPORT_JSON)).unwrap()).unwrap();
    assert_eq!(parsed.report_version, 1);
    assert_eq!(parsed.reports, reports);
    let table = std::fs::read_to_string(dir.path().join(REPORT_TABLE)).unwrap();
    assert_eq!(table.lines().filter(|l| l.contains(" mixed ") || l.contains(" clean ")).count(), 10);
    assert_eq!(render_chart(&reports).lines().count(), 11);
    assert_eq!(render_csv(&reports).lines().count(), 11);
}

#[test]
fn emitting_twice_is_byte_identical() {
    let reports = ten();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    emit_report(&reports, a.path()).unwrap();
    emit_report(&reports, b.path()).unwrap();
    for name in [REPORT_JSON, REPORT_TABLE, REPORT_CSV, CHART_CSV] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    emit_report(&reports, a.path()).unwrap();
    assert_eq!(std::fs::read(a.path().join(REPORT_JSON)).unwrap(), render_json(&reports).into_bytes());
}

#[test]
fn empty_class_renders_as_zero_with_footnote() {
    let reports = vec![report(ModelKind::Cnn, Condition::Mixed, Some(5)), report(ModelKind::Cnn, Condition::Clean, None)];
    let r = &reports[0];
    assert!(r.per_class[5].empty && r.per_class[5].accuracy == 0.0 && r.per_class[5].samples == 0);
    assert!(r.per_class.iter().enumerate().all(|(c, p)| c == 5 || !p.empty));
    let table = render_table(&reports);
    let row = table.lines().find(|l| l.starts_with("hugging")).unwrap();
    assert!(row.contains("0.0000*"), "{row}");
    assert!(table.contains("* no test samples of this class"));
    let csv = render_csv(&reports);
    assert!(csv.lines().nth(1).unwrap().ends_with(",hugging"));
    assert!(csv.lines().nth(2).unwrap().ends_with(','));
    assert!(!render_table(&reports[1..]).contains("no test samples"));
}

#[test]
fn timings_stay_out_of_the_report() {
    let json = render_json(&ten());
    assert!(!json.contains("wall"));
}

#[test]
fn other_report_versions_are_rejected() {
    let json = render_json(&ten()).replacen("\"report_version\": 1", "\"report_version\": 2", 1);
    assert!(parse_json(&json).is_err());
    assert!(emit_report(&[], tempfile::tempdir().unwrap().path()).is_err());
}
