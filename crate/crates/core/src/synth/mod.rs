//! Synthetic dyadic interaction generator.
//!
//! Bodies are posed procedurally in world space (y up, mm) by per-class motion
//! templates, placed facing each other at a random orientation inside the
//! capture area, then transformed into the camera frame with additive sensor
//! noise.
//!
//! Randomness comes from ChaCha8 streams: sample `i` of a dataset uses
//! `ChaCha8Rng::seed_from_u64(seed)` on stream `i`, pair `p` on stream
//! `PAIR_STREAM | p`, and the occlusion draw on `OCCLUSION_STREAM`. Generation
//! is therefore independent of thread scheduling.

pub mod body;
pub mod motion;

use std::collections::BTreeSet;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::manifest::{with_splits, Manifest, ManifestEntry, SplitError, SplitPlan};
use crate::skeleton::{
    BodyPose, Confidence, DyadFrame, DyadSample, InteractionLabel, JointId, OcclusionRule, FPS,
    FRAMES_PER_SAMPLE,
};
use body::{pose_body, Build, CameraTransform, PoseControls};
use motion::{perform, Performance};

const PAIR_STREAM: u64 = 1 << 63;
const OCCLUSION_STREAM: u64 = 1 << 62;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraConfig {
    pub height_mm: f64,
    pub tilt_deg: f64,
    /// Distance from the camera to the near edge of the capture area.
    pub standoff_mm: f64,
    /// Capture area extent, lateral × depth.
    pub area_mm: [f64; 2],
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig { height_mm: 2210.0, tilt_deg: 37.0, standoff_mm: 2620.0, area_mm: [2185.0, 1805.0] }
    }
}

impl CameraConfig {
    pub fn transform(&self) -> CameraTransform {
        CameraTransform::new(self.height_mm, self.standoff_mm + self.area_mm[1] / 2.0, self.tilt_deg.to_radians())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_pairs: usize,
    pub reps_per_class: usize,
    pub classes: Vec<InteractionLabel>,
    pub fps: f64,
    pub frames: usize,
    pub camera: CameraConfig,
    /// Dyad yaw range in degrees, `[low, high)`.
    pub orientation_range: [f64; 2],
    pub noise_std_mm: f64,
    pub occlusion_rate: f64,
    pub seed: u64,
    pub split: SplitPlan,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_pairs: 10,
            reps_per_class: 40,
            classes: InteractionLabel::ALL.to_vec(),
            fps: FPS,
            frames: FRAMES_PER_SAMPLE,
            camera: CameraConfig::default(),
            orientation_range: [0.0, 360.0],
            noise_std_mm: 4.0,
            occlusion_rate: 0.25,
            seed: 0,
            split: SplitPlan::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Split(#[from] SplitError),
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        if self.frames != FRAMES_PER_SAMPLE {
            return bad(format!("frames must be {FRAMES_PER_SAMPLE}, got {}", self.frames));
        }
        if self.fps != FPS {
            return bad(format!("fps must be {FPS}, got {}", self.fps));
        }
        if !(0.0..=1.0).contains(&self.occlusion_rate) {
            return bad(format!("occlusion_rate must lie in [0, 1], got {}", self.occlusion_rate));
        }
        if self.n_pairs == 0 || self.reps_per_class == 0 || self.classes.is_empty() {
            return bad("n_pairs, reps_per_class and classes must be non-empty".into());
        }
        let distinct: BTreeSet<_> = self.classes.iter().collect();
        if distinct.len() != self.classes.len() {
            return bad("classes contains duplicates".into());
        }
        if !(self.noise_std_mm.is_finite() && self.noise_std_mm >= 0.0) {
            return bad(format!("noise_std_mm must be non-negative, got {}", self.noise_std_mm));
        }
        let [lo, hi] = self.orientation_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return bad(format!("orientation_range must be finite with low <= high, got {lo}..{hi}"));
        }
        let c = &self.camera;
        if ![c.height_mm, c.tilt_deg, c.standoff_mm, c.area_mm[0], c.area_mm[1]].iter().all(|v| v.is_finite())
            || c.area_mm[0] <= 0.0
            || c.area_mm[1] <= 0.0
        {
            return bad("camera geometry must be finite with a positive area".into());
        }
        self.split.validate()?;
        Ok(())
    }

    pub fn total_samples(&self) -> usize {
        self.n_pairs * self.reps_per_class * self.classes.len()
    }
}

/// Individuality of one volunteer pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairParams {
    pub pair_id: String,
    /// Limb scale of the two volunteers; the first one instigates.
    pub scales: [f64; 2],
    pub tempo: f64,
    pub amplitude: f64,
}

impl PairParams {
    pub fn draw(seed: u64, pair: usize) -> PairParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(PAIR_STREAM | pair as u64);
        PairParams {
            pair_id: format!("p{pair:02}"),
            scales: [rng.random_range(0.9..1.1), rng.random_range(0.9..1.1)],
            tempo: rng.random_range(0.85..1.15),
            amplitude: rng.random_range(0.8..1.2),
        }
    }
}

/// A generated sample plus the subject order that was drawn for it.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub sample: DyadSample,
    pub instigator_first: bool,
}

pub struct SynthDataset {
    pub samples: Vec<DyadSample>,
    pub manifest: Manifest,
}

/// Generates one clean sample. The returned sample has empty ids except for
/// `pair_id`.
pub fn generate_sample(
    cfg: &SynthConfig,
    class: InteractionLabel,
    pair: &PairParams,
    orientation_deg: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Generated, SynthError> {
    if !cfg.classes.contains(&class) {
        return Err(SynthError::Argument(format!("class {class} is not in the configured set")));
    }
    if !orientation_deg.is_finite() {
        return Err(SynthError::Argument(format!("orientation must be finite, got {orientation_deg}")));
    }
    let perf = Performance {
        onset: rng.random_range(0.05..0.35),
        tempo: pair.tempo * rng.random_range(0.9..1.1),
        amplitude: pair.amplitude * rng.random_range(0.85..1.15),
        phase: rng.random_range(0.0..2.0 * PI),
        separation: rng.random_range(1100.0..1500.0),
        close_separation: rng.random_range(300.0..380.0),
        idle_phase: [rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI)],
    };
    let [aw, dw] = cfg.camera.area_mm;
    let center = Vec3::new(
        rng.random_range(-0.15..0.15) * aw,
        0.0,
        rng.random_range(-0.12..0.12) * dw,
    );
    let instigator_first: bool = rng.random();
    let theta = orientation_deg.to_radians();
    let axis = Vec3::new(theta.sin(), 0.0, theta.cos());
    let builds = [Build::scaled(pair.scales[0]), Build::scaled(pair.scales[1])];
    let placement = [
        (center - axis * (perf.separation / 2.0), theta),
        (center + axis * (perf.separation / 2.0), theta + PI),
    ];
    let camera = cfg.camera.transform();
    let noise = Normal::new(0.0, cfg.noise_std_mm).expect("validated noise");

    let mut frames = Vec::with_capacity(FRAMES_PER_SAMPLE);
    for t in 0..FRAMES_PER_SAMPLE {
        let tau = t as f64 / FPS;
        let local = perform(class, tau, &perf);
        let mut bodies = Vec::with_capacity(2);
        for role in 0..2 {
            let (origin, facing) = placement[role];
            let c = PoseControls {
                root: origin + local[role].root.rotate_y(facing),
                yaw: facing + local[role].yaw,
                ..local[role]
            };
            let mut pose = camera.pose(&pose_body(&builds[role], &c));
            if cfg.noise_std_mm > 0.0 {
                for (j, p) in pose.joints.iter_mut().enumerate() {
                    // The naval joint stays noise-free so trajectory trends of the
                    // inter-body distance are exact.
                    if j != JointId::SpineNaval.index() {
                        *p += Vec3::new(noise.sample(rng), noise.sample(rng), noise.sample(rng));
                    }
                }
            }
            bodies.push(pose);
        }
        if !instigator_first {
            bodies.swap(0, 1);
        }
        frames.push(DyadFrame { t: t as u32, bodies });
    }
    Ok(Generated {
        sample: DyadSample {
            sample_id: String::new(),
            pair_id: pair.pair_id.clone(),
            label: class,
            frames,
            occluded_frames: BTreeSet::new(),
        },
        instigator_first,
    })
}

/// Removes the body farther from the camera over a contiguous window of 10 to
/// 30 frames and degrades the confidences of the remaining one.
pub fn inject_occlusion(sample: &mut DyadSample, rng: &mut ChaCha8Rng) {
    let len = rng.random_range(10..=30usize);
    let start = rng.random_range(0..=FRAMES_PER_SAMPLE - len);
    let window = start..start + len;
    let depth = |b: usize| -> f64 {
        sample.frames[window.clone()].iter().map(|f| f.bodies[b].joint(JointId::SpineNaval).z).sum()
    };
    let hidden = if depth(0) >= depth(1) { 0 } else { 1 };
    for i in window {
        let frame = &mut sample.frames[i];
        frame.bodies.remove(hidden);
        let visible: &mut BodyPose = &mut frame.bodies[0];
        for c in visible.confidences.iter_mut() {
            let u: f64 = rng.random();
            *c = if u < 0.1 {
                Confidence::None
            } else if u < 0.6 {
                Confidence::Low
            } else {
                Confidence::High
            };
        }
        sample.occluded_frames.insert(i);
    }
}

fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Indices of the samples that receive an occlusion window.
pub fn occluded_indices(cfg: &SynthConfig) -> BTreeSet<usize> {
    let n = cfg.total_samples();
    let k = (cfg.occlusion_rate * n as f64).floor() as usize;
    let mut rng = sample_rng(cfg.seed, 0);
    rng.set_stream(OCCLUSION_STREAM);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order.truncate(k);
    order.into_iter().collect()
}

/// Generates `n_pairs × reps_per_class × |classes|` samples, ordered by pair,
/// then class, then repetition, with splits recorded in the manifest.
pub fn generate_dataset(cfg: &SynthConfig) -> Result<SynthDataset, SynthError> {
    cfg.validate()?;
    let pairs: Vec<PairParams> = (0..cfg.n_pairs).map(|p| PairParams::draw(cfg.seed, p)).collect();
    let occluded = occluded_indices(cfg);
    let per_pair = cfg.reps_per_class * cfg.classes.len();
    let [lo, hi] = cfg.orientation_range;

    let generated: Vec<Generated> = (0..cfg.total_samples())
        .into_par_iter()
        .map(|i| {
            let pair = &pairs[i / per_pair];
            let class = cfg.classes[(i % per_pair) / cfg.reps_per_class];
            let rep = i % cfg.reps_per_class;
            let mut rng = sample_rng(cfg.seed, i);
            let orientation = if hi > lo { rng.random_range(lo..hi) } else { lo };
            let mut g = generate_sample(cfg, class, pair, orientation, &mut rng)?;
            if occluded.contains(&i) {
                inject_occlusion(&mut g.sample, &mut rng);
            }
            g.sample.mark_occlusions(&OcclusionRule::default());
            g.sample.sample_id = format!("{}-{}-r{rep:02}", pair.pair_id, class.name());
            Ok(g)
        })
        .collect::<Result<_, SynthError>>()?;

    let entries = generated
        .iter()
        .map(|g| ManifestEntry {
            sample_id: g.sample.sample_id.clone(),
            label: g.sample.label,
            pair_id: g.sample.pair_id.clone(),
            occluded: g.sample.is_occluded(),
            instigator_first: Some(g.instigator_first),
            split: None,
            file: None,
        })
        .collect();
    let manifest = with_splits(&Manifest::new(entries), &cfg.split)?;
    Ok(SynthDataset { samples: generated.into_iter().map(|g| g.sample).collect(), manifest })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{extract_features, INTER_DISTANCE_COLUMN};
    use crate::skeleton::validate_sample;

    fn small(rate: f64) -> SynthConfig {
        SynthConfig { n_pairs: 3, reps_per_class: 2, occlusion_rate: rate, seed: 7, ..SynthConfig::default() }
    }

    fn one(class: InteractionLabel, seed: u64) -> Generated {
        let cfg = SynthConfig::default();
        let pair = PairParams::draw(seed, 0);
        let mut g = generate_sample(&cfg, class, &pair, 123.0, &mut sample_rng(seed, 0)).unwrap();
        g.sample.sample_id = "s".into();
        g
    }

    #[test]
    fn same_rng_state_gives_identical_samples() {
        assert_eq!(one(InteractionLabel::Waving, 3), one(InteractionLabel::Waving, 3));
    }

    #[test]
    fn unknown_class_is_an_argument_error() {
        let cfg = SynthConfig { classes: vec![InteractionLabel::Waving], ..SynthConfig::default() };
        let pair = PairParams::draw(0, 0);
        let err = generate_sample(&cfg, InteractionLabel::Hugging, &pair, 0.0, &mut sample_rng(0, 0));
        assert!(matches!(err, Err(SynthError::Argument(_))));
    }

    #[test]
    fn hugging_distance_strictly_decreases_over_first_half() {
        for seed in 0..20 {
            let g = one(InteractionLabel::Hugging, seed);
            let m = extract_features(&g.sample).unwrap();
            let d: Vec<f32> = (0..FRAMES_PER_SAMPLE).map(|t| m.get(t, INTER_DISTANCE_COLUMN)).collect();
            for t in 1..FRAMES_PER_SAMPLE / 2 {
                assert!(d[t] < d[t - 1], "seed {seed} frame {t}: {} !< {}", d[t], d[t - 1]);
            }
        }
    }

    #[test]
    fn nodding_receiver_head_oscillates() {
        for seed in 0..20 {
            let g = one(InteractionLabel::Nodding, seed);
            let receiver = if g.instigator_first { 1 } else { 0 };
            // Head pitch proxy: nose position relative to the head, projected
            // on the vertical of the body.
            let pitch: Vec<f64> = g
                .sample
                .frames
                .iter()
                .map(|f| {
                    let b = &f.bodies[receiver];
                    let up = (b.joint(JointId::Neck) - b.joint(JointId::SpineChest)).normalized();
                    (b.joint(JointId::Nose) - b.joint(JointId::Head)).normalized().dot(up)
                })
                .collect();
            let vel: Vec<f64> = pitch.windows(2).map(|w| w[1] - w[0]).collect();
            let changes = vel.windows(2).filter(|w| w[0].signum() != w[1].signum() && w[0] != 0.0).count();
            assert!(changes >= 2, "seed {seed}: {changes} sign changes");
        }
    }

    #[test]
    fn every_generated_sample_is_valid() {
        let ds = generate_dataset(&small(0.5)).unwrap();
        for s in &ds.samples {
            assert!(validate_sample(s).is_empty(), "{}: {:?}", s.sample_id, validate_sample(s));
        }
    }

    #[test]
    fn occlusion_rate_counts_are_exact() {
        let ds = generate_dataset(&small(0.0)).unwrap();
        assert!(ds.samples.iter().all(|s| s.occluded_frames.is_empty()));
        let cfg = small(0.5);
        let ds = generate_dataset(&cfg).unwrap();
        let n = ds.samples.iter().filter(|s| s.is_occluded()).count();
        assert_eq!(n, (0.5 * cfg.total_samples() as f64).floor() as usize);
        assert_eq!(ds.manifest.samples.iter().filter(|e| e.occluded).count(), n);
    }

    #[test]
    fn occlusion_windows_are_contiguous_single_body() {
        let ds = generate_dataset(&small(1.0)).unwrap();
        for s in &ds.samples {
            let idx: Vec<usize> = s.occluded_frames.iter().copied().collect();
            assert!((10..=30).contains(&idx.len()), "{}", idx.len());
            assert_eq!(idx.last().unwrap() - idx[0] + 1, idx.len());
            for &i in &idx {
                assert_eq!(s.frames[i].bodies.len(), 1);
            }
        }
    }

    #[test]
    fn dataset_is_class_balanced_and_split() {
        let cfg = small(0.25);
        let ds = generate_dataset(&cfg).unwrap();
        assert_eq!(ds.samples.len(), 3 * 2 * 12);
        for l in InteractionLabel::ALL {
            assert_eq!(ds.samples.iter().filter(|s| s.label == l).count(), 6);
        }
        assert!(ds.manifest.samples.iter().all(|e| e.split.is_some()));
    }

    #[test]
    fn generation_does_not_depend_on_thread_count() {
        let cfg = small(0.5);
        let a = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| generate_dataset(&cfg).unwrap());
        let b = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| generate_dataset(&cfg).unwrap());
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.manifest, b.manifest);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for cfg in [
            SynthConfig { frames: 90, ..SynthConfig::default() },
            SynthConfig { occlusion_rate: 1.5, ..SynthConfig::default() },
            SynthConfig { classes: vec![], ..SynthConfig::default() },
            SynthConfig { noise_std_mm: -1.0, ..SynthConfig::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn defaults_reproduce_protocol_size() {
        assert_eq!(SynthConfig::default().total_samples(), 4800);
    }
}
