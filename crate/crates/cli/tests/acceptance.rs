//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use dyadkit_core::features::{zero_occluded, INTER_DISTANCE_COLUMN, NUM_FEATURES, SUBJECT_WIDTH};
use dyadkit_core::manifest::Split;
use dyadkit_core::representations::{build_descriptor, build_graph, decode_descriptor, EdgeKind};
use dyadkit_core::skeleton::{
    swap_subjects, BodyPose, Confidence, DyadFrame, DyadSample, InteractionLabel, OcclusionRule, FRAMES_PER_SAMPLE,
    NUM_JOINTS,
};
use dyadkit_core::synth::{generate_dataset, SynthConfig};
use dyadkit_core::{extract_features, FeatureMatrix, Vec3};
use dyadkit_harness::report::{REPORT_JSON, REPORT_TABLE};
use dyadkit_harness::{emit_report, run_benchmark, BenchmarkConfig, Condition, Dataset, TrainConfig, TrainReport};
use dyadkit_nn::{grad_check, GradCheckConfig, ModelKind, ModelSpec, Precision};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration, what: &str) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took <= limit, || format!("{what} took {:.1}s, limit {:.0}s", took.as_secs_f64(), limit.as_secs_f64()))
}

fn bits(m: &FeatureMatrix) -> Vec<u32> {
    m.as_slice().iter().map(|v| v.to_bits()).collect()
}

fn random_pose(rng: &mut ChaCha8Rng) -> BodyPose {
    let root = Vec3::new(rng.random_range(-1500.0..1500.0), rng.random_range(-800.0..800.0), rng.random_range(1500.0..4500.0));
    let mut p = BodyPose::default();
    for j in 0..NUM_JOINTS {
        p.joints[j] = root + Vec3::new(rng.random_range(-900.0..900.0), rng.random_range(-900.0..900.0), rng.random_range(-300.0..300.0));
        p.confidences[j] = Confidence::from_ordinal(rng.random_range(0..4)).unwrap();
    }
    p
}

fn random_sample(seed: u64, drop_prob: f64) -> DyadSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = (0..FRAMES_PER_SAMPLE)
        .map(|t| {
            let mut bodies = vec![random_pose(&mut rng), random_pose(&mut rng)];
            if rng.random_bool(drop_prob) {
                bodies.truncate(1);
            }
            DyadFrame { t: t as u32, bodies }
        })
        .collect();
    let mut s = DyadSample {
        sample_id: format!("s{seed}"),
        pair_id: "p00".into(),
        label: InteractionLabel::from_class_id((seed % 12) as usize).unwrap(),
        frames,
        occluded_frames: BTreeSet::new(),
    };
    s.mark_occlusions(&OcclusionRule::default());
    s
}

fn random_matrix(rng: &mut ChaCha8Rng) -> FeatureMatrix {
    let data = (0..FRAMES_PER_SAMPLE * NUM_FEATURES)
        .map(|_| match rng.random_range(0..8) {
            0 => 0.0,
            1 => -0.0,
            _ => rng.random_range(-5000.0f32..5000.0),
        })
        .collect();
    FeatureMatrix::from_vec(FRAMES_PER_SAMPLE, data).unwrap()
}

fn small_dataset(seed: u64) -> Vec<DyadSample> {
    generate_dataset(&SynthConfig { n_pairs: 3, reps_per_class: 1, seed, ..SynthConfig::default() }).unwrap().samples
}

fn layout() -> Outcome {
    let start = Instant::now();
    let samples = small_dataset(1);
    for s in &samples {
        let m = extract_features(s).map_err(|e| e.to_string())?;
        ensure(m.rows() == 91 && m.cols() == 467, || format!("{}: {}×{}", s.sample_id, m.rows(), m.cols()))?;
        let img = build_descriptor(&m);
        ensure(img.shape() == [91, 157, 3], || format!("descriptor {:?}", img.shape()))?;
        // SPINE_NAVAL is joint 1: its coordinates fill columns 3..6.
        for ch in 0..3 {
            ensure(img.get(0, 1, ch) == m.get(0, 3 + ch), || format!("{}: spine channel {ch} misplaced", s.sample_id))?;
        }
    }
    // Moving a joint of the second body touches only the second block.
    let s = samples.iter().find(|s| s.occluded_frames.is_empty()).unwrap();
    let mut moved = s.clone();
    for f in moved.frames.iter_mut() {
        f.bodies[1].joints[NUM_JOINTS - 1].x += 120.0;
    }
    let (a, b) = (extract_features(s).unwrap(), extract_features(&moved).unwrap());
    for t in 0..91 {
        ensure(a.row(t)[..SUBJECT_WIDTH] == b.row(t)[..SUBJECT_WIDTH], || format!("frame {t}: first block changed"))?;
        ensure(a.get(t, INTER_DISTANCE_COLUMN) == b.get(t, INTER_DISTANCE_COLUMN), || format!("frame {t}: distance changed"))?;
    }
    ensure(a.as_slice() != b.as_slice(), || "second block did not change".into())?;
    within(start, Duration::from_secs(1), "layout checks")?;
    Ok(format!("{} samples: 91×467, blocks of {SUBJECT_WIDTH}, 91×157×3", samples.len()))
}

fn graph_counts() -> Outcome {
    let start = Instant::now();
    let d = generate_dataset(&SynthConfig { n_pairs: 3, reps_per_class: 1, occlusion_rate: 0.5, seed: 2, ..SynthConfig::default() })
        .unwrap();
    for s in &d.samples {
        let g = build_graph(s, &extract_features(s).unwrap());
        let got = [g.nodes.len(), g.count(EdgeKind::Natural), g.count(EdgeKind::Temporal), g.count(EdgeKind::Interbody)];
        ensure(got == [5824, 5642, 5760, 91], || format!("{}: {got:?}", s.sample_id))?;
    }
    within(start, Duration::from_secs(1), "graph counts")?;
    Ok(format!("{} samples (occluded included): 5824 nodes, 5642/5760/91 edges", d.samples.len()))
}

fn round_trip() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..1000 {
        let m = random_matrix(&mut rng);
        let back = decode_descriptor(&build_descriptor(&m)).map_err(|e| format!("matrix {i}: {e}"))?;
        ensure(bits(&back) == bits(&m), || format!("matrix {i} differs after round trip"))?;
    }
    within(start, Duration::from_secs(10), "round trip")?;
    Ok("1000 matrices bit-exact".into())
}

fn properties() -> Outcome {
    let start = Instant::now();
    let mut runner = TestRunner::new(Config { cases: 500, failure_persistence: None, ..Config::default() });
    runner
        .run(&(any::<u64>(), 0.0..0.3f64), |(seed, drop)| {
            let s = random_sample(seed, drop);
            let swapped = extract_features(&swap_subjects(&s)).unwrap();
            prop_assert_eq!(bits(&swapped), bits(&extract_features(&s).unwrap().swap_subject_blocks()));
            Ok(())
        })
        .map_err(|e| format!("subject swap: {e}"))?;
    runner
        .run(&(any::<u64>(), 0usize..2, prop::array::uniform3(-2000.0..2000.0f64)), |(seed, body, offset)| {
            let s = random_sample(seed, 0.1);
            let mut moved = s.clone();
            for f in moved.frames.iter_mut() {
                if let Some(b) = f.bodies.get_mut(body) {
                    *b = b.translated(Vec3::from_array(offset));
                }
            }
            let (a, b) = (extract_features(&s).unwrap(), extract_features(&moved).unwrap());
            for t in 0..FRAMES_PER_SAMPLE {
                for c in (0..NUM_FEATURES).filter(|&c| c != INTER_DISTANCE_COLUMN) {
                    let (x, y) = (a.get(t, c), b.get(t, c));
                    prop_assert!((x - y).abs() <= 1e-3 * x.abs().max(1.0), "t={} c={} {} vs {}", t, c, x, y);
                }
            }
            Ok(())
        })
        .map_err(|e| format!("translation: {e}"))?;
    runner
        .run(&(any::<u64>(), prop::collection::btree_set(0usize..FRAMES_PER_SAMPLE, 0..40)), |(seed, rows)| {
            let m = random_matrix(&mut ChaCha8Rng::seed_from_u64(seed));
            let z = zero_occluded(&m, &rows).unwrap();
            for t in 0..FRAMES_PER_SAMPLE {
                if rows.contains(&t) {
                    prop_assert!(z.row(t).iter().all(|v| v.to_bits() == 0));
                } else {
                    prop_assert_eq!(z.row(t), m.row(t));
                }
            }
            prop_assert_eq!(bits(&zero_occluded(&z, &rows).unwrap()), bits(&z));
            Ok(())
        })
        .map_err(|e| format!("occlusion zeroing: {e}"))?;
    within(start, Duration::from_secs(30), "property checks")?;
    Ok("swap, translation, zeroing: 500 cases each".into())
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let specs: Vec<ModelSpec> = ModelKind::ALL.iter().map(|&k| ModelSpec::new(k)).collect();
    let report = grad_check(&specs, 1e-4, &GradCheckConfig::default()).map_err(|e| e.to_string())?;
    let failures = report.failures();
    ensure(failures.is_empty(), || format!("failing blocks {failures:?}"))?;
    within(start, Duration::from_secs(300), "gradient checks")?;
    Ok(format!("5 models, 12 frames, max rel error {:.2e}", report.max_rel_error()))
}

fn learnability(out: &Path, reports: &mut Vec<TrainReport>) -> Outcome {
    let cfg = SynthConfig { reps_per_class: 8, ..SynthConfig::default() };
    let d = generate_dataset(&cfg).map_err(|e| e.to_string())?;
    ensure(d.samples.len() == 960, || format!("{} samples", d.samples.len()))?;
    let ds = Dataset::from_samples(&d.samples, d.manifest).map_err(|e| e.to_string())?;
    let train = TrainConfig { max_epochs: 100, precision: Precision::F32, ..TrainConfig::default() };
    let mut problems = Vec::new();
    let mut summary = Vec::new();
    for kind in ModelKind::ALL {
        let start = Instant::now();
        let bench = BenchmarkConfig { models: vec![ModelSpec::new(kind)], conditions: Condition::BOTH.to_vec(), train: train.clone() };
        let runs = run_benchmark(&ds, &bench).map_err(|e| e.to_string())?;
        let took = start.elapsed().as_secs_f64();
        for r in &runs {
            let acc = r.report.test_accuracy;
            summary.push(format!("{} {} {:.3}", kind.id(), r.report.condition, acc));
            if acc < 0.5 {
                problems.push(format!("{} {} accuracy {acc:.3}", kind.id(), r.report.condition));
            }
            if r.log.epochs() > 100 {
                problems.push(format!("{} {} ran {} epochs", kind.id(), r.report.condition, r.log.epochs()));
            }
        }
        eprintln!("  {} done in {took:.0}s: {}", kind.id(), summary[summary.len() - 2..].join(", "));
        if took > 15.0 * 60.0 {
            problems.push(format!("{} took {took:.0}s", kind.id()));
        }
        reports.extend(runs.into_iter().map(|r| r.report));
    }
    emit_report(reports, out).map_err(|e| e.to_string())?;
    let table = fs::read_to_string(out.join(REPORT_TABLE)).map_err(|e| e.to_string())?;
    let rows = table.lines().filter(|l| l.contains(" mixed ") || l.contains(" clean ")).count();
    ensure(rows == 10, || format!("report table has {rows} rows"))?;
    ensure(problems.is_empty(), || problems.join("; "))?;
    Ok(summary.join(", "))
}

fn dyadkit(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_dyadkit"))
        .args(args)
        .env_remove("DYADKIT_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || format!("dyadkit {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
}

fn pipeline(root: &Path, jobs: &str) -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
    let data = root.join("data");
    let out = root.join("out");
    let p = |x: &Path| x.to_str().unwrap().to_string();
    let (d, f) = (p(&data), p(&data.join("features")));
    dyadkit(&["--jobs", jobs, "--seed", "9", "synth", "--out", &d, "--pairs", "3", "--reps", "1"])?;
    dyadkit(&["--jobs", jobs, "extract", "--in", &p(&data.join("captures")), "--out", &f])?;
    dyadkit(&["--jobs", jobs, "encode", "--form", "descriptor", "--in", &f, "--out", &p(&data.join("descriptors"))])?;
    dyadkit(&["--jobs", jobs, "encode", "--form", "graph", "--in", &f, "--out", &p(&data.join("graphs"))])?;
    dyadkit(&["--jobs", jobs, "--seed", "9", "train", "--data", &d, "--out", &p(&out), "--epochs", "2"])?;
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).map_err(|e| e.to_string())? {
            let path = e.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n != "timings.json") {
                files.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).map_err(|e| e.to_string())?);
            }
        }
    }
    Ok(files)
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let one = pipeline(a.path(), "1")?;
    let eight = pipeline(b.path(), "8")?;
    let names: Vec<&PathBuf> = one.keys().collect();
    ensure(names == eight.keys().collect::<Vec<_>>(), || "the runs wrote different file sets".into())?;
    let differing: Vec<String> = one.iter().filter(|(k, v)| eight[*k] != **v).map(|(k, _)| k.display().to_string()).collect();
    ensure(differing.is_empty(), || format!("differing files: {}", differing.join(", ")))?;
    let count = |ext: &str| one.keys().filter(|k| k.extension().is_some_and(|e| e == ext)).count();
    ensure(count("feat") == 36 && count("modl") == 10 && one.contains_key(Path::new("out").join(REPORT_JSON).as_path()), || {
        format!("{} feature files, {} checkpoints", count("feat"), count("modl"))
    })?;
    Ok(format!("{} files identical under --jobs 1 and --jobs 8", one.len()))
}

fn protocol(reports: &[TrainReport]) -> Outcome {
    let d = generate_dataset(&SynthConfig::default()).map_err(|e| e.to_string())?;
    ensure(d.samples.len() == 4800, || format!("{} samples", d.samples.len()))?;
    let mut per_class = [0usize; 12];
    for s in &d.samples {
        per_class[s.label.class_id()] += 1;
    }
    ensure(per_class.iter().all(|&c| c == 400), || format!("per class {per_class:?}"))?;
    let occluded = d.manifest.samples.iter().filter(|e| e.occluded).count();
    ensure(occluded > 0 && occluded < 4800, || format!("{occluded} occluded samples"))?;
    for split in [Split::Train, Split::Val, Split::Test] {
        ensure(d.manifest.samples.iter().any(|e| e.split == Some(split)), || format!("no {split:?} samples"))?;
    }
    ensure(d.manifest.samples.iter().all(|e| e.split.is_some()), || "unassigned samples".into())?;
    let cells: BTreeSet<(ModelKind, Condition)> = reports.iter().map(|r| (r.model, r.condition)).collect();
    ensure(reports.len() == 10 && cells.len() == 10, || format!("{} reports over {} cells", reports.len(), cells.len()))?;
    Ok(format!("4800 samples, 400 per class, {occluded} occluded, 10 reports"))
}

fn main() {
    let out = tempfile::tempdir().expect("temp dir");
    let mut reports = Vec::new();
    let mut failed = 0;
    let mut ran = 0;
    // Numeric arguments select criteria; everything else is ignored.
    let only: BTreeSet<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut check = |n: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        if !only.is_empty() && !only.contains(&n) {
            return;
        }
        ran += 1;
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {n} {name}: PASS ({secs:.1}s) {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n} {name}: FAIL ({secs:.1}s) {why}");
            }
        }
    };
    check(1, "layout", &mut layout);
    check(2, "graph counts", &mut graph_counts);
    check(3, "descriptor round trip", &mut round_trip);
    check(4, "invariances", &mut properties);
    check(5, "gradient checks", &mut gradients);
    check(6, "learnability", &mut || learnability(out.path(), &mut reports));
    check(7, "determinism", &mut determinism);
    check(8, "protocol", &mut || protocol(&reports));
    if failed > 0 {
        println!("{failed} of {ran} criteria failed");
        std::process::exit(1);
    }
    println!("{ran} of {ran} criteria pass");
}
