use dyadkit_core::synth::{generate_dataset, SynthConfig};
use dyadkit_harness::normalize::fit_input_scale;
use dyadkit_harness::{Dataset, Evaluation};
use dyadkit_nn::{InputForm, ModelInput};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn confusion_statistics_agree(cells in prop::collection::vec(0u64..6, 144)) {
        let mut e = Evaluation::empty();
        for (i, v) in cells.iter().enumerate() {
            e.confusion[i / 12][i % 12] = *v;
        }
        let total: u64 = cells.iter().sum();
        let trace: u64 = (0..12).map(|c| cells[c * 13]).sum();
        prop_assert_eq!(e.total(), total);
        prop_assert_eq!(e.correct(), trace);
        if total > 0 {
            prop_assert_eq!(e.accuracy(), trace as f64 / total as f64);
        } else {
            prop_assert_eq!(e.accuracy(), 0.0);
        }
        // Overall accuracy is the count-weighted mean of per-class recall.
        let weighted: f64 = e.per_class().iter().enumerate().filter_map(|(c, p)| p.map(|p| p * e.class_count(c) as f64)).sum();
        prop_assert!((weighted - trace as f64).abs() < 1e-9);
        for (c, p) in e.per_class().iter().enumerate() {
            prop_assert_eq!(p.is_none(), e.class_count(c) == 0);
            if let Some(p) = p {
                prop_assert!((0.0..=1.0).contains(p));
            }
        }
    }
}

fn rms_after_scaling(ds: &Dataset, form: InputForm, idx: &[usize], scale: &[f64]) -> Vec<f64> {
    let n = scale.len();
    let mut sum = vec![0.0; n];
    let mut count = vec![0.0; n];
    for &i in idx {
        match ds.input(form, i).unwrap() {
            ModelInput::Sequence { data, .. } | ModelInput::Image { data, .. } => {
                for (k, v) in data.iter().enumerate() {
                    sum[k % n] += (v * scale[k % n]).powi(2);
                    count[k % n] += 1.0;
                }
            }
            ModelInput::Graph { nodes, .. } => {
                let plane = nodes.len() / n;
                for (k, v) in nodes.iter().enumerate() {
                    sum[k / plane] += (v * scale[k / plane]).powi(2);
                    count[k / plane] += 1.0;
                }
            }
        }
    }
    sum.iter().zip(&count).map(|(s, c)| (s / c).sqrt()).collect()
}

#[test]
fn fitted_scale_gives_unit_rms_on_the_fitted_samples() {
    let d = generate_dataset(&SynthConfig { n_pairs: 3, reps_per_class: 1, seed: 4, ..SynthConfig::default() }).unwrap();
    let ds = Dataset::from_samples(&d.samples, d.manifest).unwrap();
    let idx: Vec<usize> = (0..ds.len()).step_by(2).collect();
    for form in [InputForm::FeatureMatrix, InputForm::DescriptorImage, InputForm::InteractionGraph] {
        let scale = fit_input_scale(&ds, form, &idx).unwrap();
        assert!(scale.iter().all(|s| s.is_finite() && *s > 0.0));
        for (k, r) in rms_after_scaling(&ds, form, &idx, &scale).iter().enumerate() {
            // Slots that are always zero (descriptor padding) keep scale 1.
            if *r != 0.0 {
                assert!((r - 1.0).abs() < 1e-9, "{form} slot {k}: {r}");
            } else {
                assert_eq!(scale[k], 1.0);
            }
        }
    }
}
