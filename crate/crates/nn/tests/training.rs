use dyadkit_nn::{train_step, Adam, AdamConfig, LossOptions, Model, ModelInput, ModelSpec, NnError, Precision};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const FRAMES: usize = 4;
const F: usize = 467;

/// Two classes split by the sign of a fixed projection of the frame mean.
fn toy_set(n: usize, seed: u64) -> (Vec<ModelInput>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..F).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    while xs.len() < n {
        let data: Vec<f64> = (0..FRAMES * F).map(|_| StandardNormal.sample(&mut rng)).collect();
        let score: f64 = (0..F).map(|j| w[j] * (0..FRAMES).map(|t| data[t * F + j]).sum::<f64>()).sum::<f64>() / FRAMES as f64;
        // Keep a margin so the classes are cleanly separable.
        if score.abs() < 3.0 {
            continue;
        }
        ys.push(usize::from(score > 0.0));
        xs.push(ModelInput::Sequence { rows: FRAMES, data });
    }
    (xs, ys)
}

fn frame_mean(x: &ModelInput) -> Vec<f64> {
    let ModelInput::Sequence { data, .. } = x else { unreachable!() };
    (0..F).map(|j| (0..FRAMES).map(|t| data[t * F + j]).sum::<f64>() / FRAMES as f64).collect()
}

/// Plain logistic regression by gradient descent; reaching zero training
/// errors certifies the toy set is linearly separable.
fn logistic_oracle_accuracy(xs: &[ModelInput], ys: &[usize]) -> f64 {
    let feats: Vec<Vec<f64>> = xs.iter().map(frame_mean).collect();
    let mut w = vec![0.0; F + 1];
    for _ in 0..500 {
        let mut g = vec![0.0; F + 1];
        for (x, y) in feats.iter().zip(ys) {
            let z = w[F] + x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            let p = 1.0 / (1.0 + (-z).exp());
            let e = p - *y as f64;
            for j in 0..F {
                g[j] += e * x[j];
            }
            g[F] += e;
        }
        for j in 0..=F {
            w[j] -= 0.5 * g[j] / feats.len() as f64;
        }
    }
    let correct = feats
        .iter()
        .zip(ys)
        .filter(|(x, y)| {
            let z = w[F] + x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            usize::from(z > 0.0) == **y
        })
        .count();
    correct as f64 / ys.len() as f64
}

fn toy_spec() -> ModelSpec {
    ModelSpec { arch: dyadkit_nn::Architecture::BiLstm { hidden: 16 }, frames: FRAMES, head_hidden: 16 }
}

fn accuracy(model: &Model, xs: &[ModelInput], ys: &[usize]) -> f64 {
    let probs = model.forward_batch(xs).unwrap();
    let correct = probs
        .iter()
        .zip(ys)
        .filter(|(p, y)| p.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0 == **y)
        .count();
    correct as f64 / ys.len() as f64
}

fn run(steps: usize, lr: f64, seed: u64, precision: Precision) -> (Model, Vec<f64>) {
    let (xs, ys) = toy_set(64, 1);
    let mut model = Model::build(&toy_spec(), seed).unwrap();
    let mut adam = Adam::new(AdamConfig { lr, ..AdamConfig::default() }, &model);
    let opts = LossOptions { precision, chunk: 4, fault: None };
    let mut losses = Vec::new();
    for s in 0..steps {
        let lo = (s * 16) % xs.len();
        losses.push(train_step(&mut model, &mut adam, &xs[lo..lo + 16], &ys[lo..lo + 16], &opts).unwrap());
    }
    (model, losses)
}

#[test]
fn learns_separable_toy_set() {
    let (xs, ys) = toy_set(64, 1);
    assert_eq!(logistic_oracle_accuracy(&xs, &ys), 1.0);
    let (model, losses) = run(200, 1e-3, 3, Precision::F64);
    let acc = accuracy(&model, &xs, &ys);
    assert!(acc >= 0.95, "training accuracy {acc}");
    assert!(losses.last().unwrap() < &losses[0]);
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let before = Model::build(&toy_spec(), 3).unwrap();
    let (after, _) = run(5, 0.0, 3, Precision::F64);
    assert_eq!(before.blocks(), after.blocks());
}

#[test]
fn trajectories_are_bit_identical() {
    let (a, la) = run(12, 1e-3, 9, Precision::F64);
    let (b, lb) = run(12, 1e-3, 9, Precision::F64);
    assert_eq!(a.blocks(), b.blocks());
    assert_eq!(la.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), lb.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

#[test]
fn trajectories_do_not_depend_on_thread_count() {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    for precision in [Precision::F64, Precision::F32] {
        let (a, _) = one.install(|| run(6, 1e-3, 2, precision));
        let (b, _) = four.install(|| run(6, 1e-3, 2, precision));
        assert_eq!(a.blocks(), b.blocks());
    }
}

#[test]
fn f32_mode_tracks_f64_gradients() {
    let (xs, ys) = toy_set(8, 4);
    let model = Model::build(&toy_spec(), 1).unwrap();
    let (l64, g64) = model.loss_and_grads(&xs, &ys).unwrap();
    let opts = LossOptions { precision: Precision::F32, ..LossOptions::default() };
    let (l32, g32) = model.loss_and_grads_with(&xs, &ys, &opts).unwrap();
    assert!((l64 - l32).abs() < 1e-4);
    for (a, b) in g64.iter().flatten().zip(g32.iter().flatten()) {
        assert!((a - b).abs() < 1e-3 * a.abs().max(1e-2), "{a} vs {b}");
    }
}

#[test]
fn divergence_names_the_step() {
    let (xs, ys) = toy_set(16, 1);
    let mut model = Model::build(&toy_spec(), 3).unwrap();
    let mut adam = Adam::new(AdamConfig::default(), &model);
    let opts = LossOptions::default();
    train_step(&mut model, &mut adam, &xs, &ys, &opts).unwrap();
    train_step(&mut model, &mut adam, &xs, &ys, &opts).unwrap();
    model.blocks_mut()[0].data[0] = f64::NAN;
    match train_step(&mut model, &mut adam, &xs, &ys, &opts) {
        Err(NnError::Training { step, .. }) => assert_eq!(step, 3),
        other => panic!("expected a training error, got {other:?}"),
    }
}
