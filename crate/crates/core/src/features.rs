//! Per-frame skeletal features arranged as a 91 x 467 matrix.
//!
//! Each row holds, for subject 1 then subject 2 (233 columns each):
//!
//! | offset | width | content                                             |
//! |--------|-------|-----------------------------------------------------|
//! | 0      | 96    | joint coordinates relative to SPINE_NAVAL, x,y,z    |
//! | 96     | 96    | joint velocities (mm/s), x,y,z                      |
//! | 192    | 36    | 12 angle sets (angle rad, angular velocity rad/s, confidence) |
//! | 228    | 5     | intra-body distances (mm)                           |
//!
//! followed by the SPINE_NAVAL to SPINE_NAVAL inter-body distance at column 466.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::binio::{FormatError, Reader, Writer};
use crate::geometry::Vec3;
use crate::skeleton::{
    validate_sample, BodyPose, Confidence, DyadSample, JointId, Violation, FPS, NUM_JOINTS,
};

pub const NUM_ANGLES: usize = 12;
pub const NUM_DISTANCES: usize = 5;
pub const SUBJECT_WIDTH: usize = 233;
pub const NUM_FEATURES: usize = 2 * SUBJECT_WIDTH + 1;
pub const JOINT_OFFSET: usize = 0;
pub const VELOCITY_OFFSET: usize = 96;
pub const ANGLE_OFFSET: usize = 192;
pub const DISTANCE_OFFSET: usize = 228;
pub const INTER_DISTANCE_COLUMN: usize = 466;

/// Vector lengths below this (mm) make an angle undefined.
pub const DEGENERATE_LENGTH_MM: f64 = 1e-6;

pub const FEATURE_MAGIC: &[u8; 8] = b"FEAT0001";

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("invalid sample: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("{0}")]
    Argument(String),
    #[error("feature file: {0}")]
    Format(#[from] FormatError),
}

/// Joint angle at an apex joint, spanned by the rays to two neighbours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AngleId {
    ElbowRight,
    ElbowLeft,
    ShoulderRight,
    ShoulderLeft,
    WristRight,
    Neck,
    SpineChest,
    SpineNaval,
    HipRight,
    HipLeft,
    KneeRight,
    KneeLeft,
}

impl AngleId {
    pub const ALL: [AngleId; NUM_ANGLES] = [
        AngleId::ElbowRight,
        AngleId::ElbowLeft,
        AngleId::ShoulderRight,
        AngleId::ShoulderLeft,
        AngleId::WristRight,
        AngleId::Neck,
        AngleId::SpineChest,
        AngleId::SpineNaval,
        AngleId::HipRight,
        AngleId::HipLeft,
        AngleId::KneeRight,
        AngleId::KneeLeft,
    ];

    /// `(end_a, apex, end_b)`.
    pub fn joints(self) -> (JointId, JointId, JointId) {
        use JointId as J;
        match self {
            AngleId::ElbowRight => (J::WristRight, J::ElbowRight, J::ShoulderRight),
            AngleId::ElbowLeft => (J::WristLeft, J::ElbowLeft, J::ShoulderLeft),
            AngleId::ShoulderRight => (J::ElbowRight, J::ShoulderRight, J::SpineChest),
            AngleId::ShoulderLeft => (J::ElbowLeft, J::ShoulderLeft, J::SpineChest),
            AngleId::WristRight => (J::HandRight, J::WristRight, J::ElbowRight),
            AngleId::Neck => (J::Head, J::Neck, J::SpineChest),
            AngleId::SpineChest => (J::Neck, J::SpineChest, J::SpineNaval),
            AngleId::SpineNaval => (J::SpineChest, J::SpineNaval, J::Pelvis),
            AngleId::HipRight => (J::KneeRight, J::HipRight, J::Pelvis),
            AngleId::HipLeft => (J::KneeLeft, J::HipLeft, J::Pelvis),
            AngleId::KneeRight => (J::AnkleRight, J::KneeRight, J::HipRight),
            AngleId::KneeLeft => (J::AnkleLeft, J::KneeLeft, J::HipLeft),
        }
    }

    pub fn apex(self) -> JointId {
        self.joints().1
    }

    pub fn index(self) -> usize {
        AngleId::ALL.iter().position(|&a| a == self).unwrap()
    }

    /// The angle whose apex is `joint`, if any.
    pub fn at_apex(joint: JointId) -> Option<AngleId> {
        AngleId::ALL.iter().copied().find(|a| a.apex() == joint)
    }
}

/// Intra-body joint pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DistanceId {
    WristToWrist,
    RightWristToHead,
    LeftWristToHead,
    RightWristToPelvis,
    LeftWristToPelvis,
}

impl DistanceId {
    pub const ALL: [DistanceId; NUM_DISTANCES] = [
        DistanceId::WristToWrist,
        DistanceId::RightWristToHead,
        DistanceId::LeftWristToHead,
        DistanceId::RightWristToPelvis,
        DistanceId::LeftWristToPelvis,
    ];

    pub fn joints(self) -> (JointId, JointId) {
        use JointId as J;
        match self {
            DistanceId::WristToWrist => (J::WristLeft, J::WristRight),
            DistanceId::RightWristToHead => (J::WristRight, J::Head),
            DistanceId::LeftWristToHead => (J::WristLeft, J::Head),
            DistanceId::RightWristToPelvis => (J::WristRight, J::Pelvis),
            DistanceId::LeftWristToPelvis => (J::WristLeft, J::Pelvis),
        }
    }
}

pub fn recenter_body(p: &BodyPose) -> BodyPose {
    let origin = p.joint(JointId::SpineNaval);
    let mut out = *p;
    for j in out.joints.iter_mut() {
        *j = *j - origin;
    }
    out
}

fn check_dt(dt: f64) -> Result<(), FeatureError> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(FeatureError::Argument(format!("time step must be positive, got {dt}")))
    }
}

/// Finite-difference joint velocities in mm/s; all zero without a previous pose.
pub fn joint_velocities(
    prev: Option<&BodyPose>,
    curr: &BodyPose,
    dt: f64,
) -> Result<[Vec3; NUM_JOINTS], FeatureError> {
    check_dt(dt)?;
    let mut out = [Vec3::ZERO; NUM_JOINTS];
    if let Some(prev) = prev {
        for (n, v) in out.iter_mut().enumerate() {
            *v = (curr.joints[n] - prev.joints[n]) * (1.0 / dt);
        }
    }
    Ok(out)
}

/// Angle in `[0, pi]` at the apex joint and the apex confidence.
pub fn joint_angle(pose: &BodyPose, angle: AngleId) -> (f64, Confidence) {
    let (a, apex, b) = angle.joints();
    let u = pose.joint(a) - pose.joint(apex);
    let v = pose.joint(b) - pose.joint(apex);
    if u.norm() < DEGENERATE_LENGTH_MM || v.norm() < DEGENERATE_LENGTH_MM {
        return (0.0, Confidence::None);
    }
    // Same value as arccos of the clamped normalized dot product, without its
    // loss of precision near 0 and pi.
    let theta = u.cross(v).norm().atan2(u.dot(v));
    (theta, pose.confidence(apex))
}

pub fn angular_velocity(prev: Option<f64>, curr: f64, dt: f64) -> Result<f64, FeatureError> {
    check_dt(dt)?;
    Ok(prev.map_or(0.0, |p| (curr - p) / dt))
}

pub fn intra_distances(pose: &BodyPose) -> [f64; NUM_DISTANCES] {
    DistanceId::ALL.map(|d| {
        let (a, b) = d.joints();
        (pose.joint(a) - pose.joint(b)).norm()
    })
}

pub fn inter_distance(raw1: &BodyPose, raw2: &BodyPose) -> f64 {
    (raw1.joint(JointId::SpineNaval) - raw2.joint(JointId::SpineNaval)).norm()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distances {
    pub intra1: [f64; NUM_DISTANCES],
    pub intra2: [f64; NUM_DISTANCES],
    pub inter: f64,
}

pub fn distances(pose1: &BodyPose, pose2: &BodyPose) -> Distances {
    Distances {
        intra1: intra_distances(pose1),
        intra2: intra_distances(pose2),
        inter: inter_distance(pose1, pose2),
    }
}

/// `rows x 467` feature values, row-major, 32-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    data: Vec<f32>,
    pub occluded_frames: BTreeSet<usize>,
}

impl FeatureMatrix {
    pub fn zeros(rows: usize) -> Self {
        FeatureMatrix { rows, data: vec![0.0; rows * NUM_FEATURES], occluded_frames: BTreeSet::new() }
    }

    pub fn from_vec(rows: usize, data: Vec<f32>) -> Result<Self, FeatureError> {
        if data.len() != rows * NUM_FEATURES {
            return Err(FeatureError::Argument(format!(
                "expected {} values for {rows} rows, got {}",
                rows * NUM_FEATURES,
                data.len()
            )));
        }
        Ok(FeatureMatrix { rows, data, occluded_frames: BTreeSet::new() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        NUM_FEATURES
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * NUM_FEATURES..(t + 1) * NUM_FEATURES]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f32] {
        &mut self.data[t * NUM_FEATURES..(t + 1) * NUM_FEATURES]
    }

    pub fn get(&self, t: usize, c: usize) -> f32 {
        self.data[t * NUM_FEATURES + c]
    }

    /// Copy with subject blocks `[0,233)` and `[233,466)` exchanged.
    pub fn swap_subject_blocks(&self) -> FeatureMatrix {
        let mut out = self.clone();
        for t in 0..self.rows {
            let row = out.row_mut(t);
            let (a, b) = row.split_at_mut(SUBJECT_WIDTH);
            a.swap_with_slice(&mut b[..SUBJECT_WIDTH]);
        }
        out
    }
}

fn write_subject(
    row: &mut [f32],
    pose: &BodyPose,
    vel: &[Vec3; NUM_JOINTS],
    angles: &[(f64, Confidence); NUM_ANGLES],
    omegas: &[f64; NUM_ANGLES],
) {
    for (n, p) in pose.joints.iter().enumerate() {
        for (k, v) in p.to_array().into_iter().enumerate() {
            row[JOINT_OFFSET + 3 * n + k] = v as f32;
        }
    }
    for (n, v) in vel.iter().enumerate() {
        for (k, x) in v.to_array().into_iter().enumerate() {
            row[VELOCITY_OFFSET + 3 * n + k] = x as f32;
        }
    }
    for k in 0..NUM_ANGLES {
        row[ANGLE_OFFSET + 3 * k] = angles[k].0 as f32;
        row[ANGLE_OFFSET + 3 * k + 1] = omegas[k] as f32;
        row[ANGLE_OFFSET + 3 * k + 2] = angles[k].1.as_f64() as f32;
    }
    for (j, d) in intra_distances(pose).into_iter().enumerate() {
        row[DISTANCE_OFFSET + j] = d as f32;
    }
}

/// Builds the feature matrix of a valid sample and zeroes its occluded rows.
pub fn extract_features(s: &DyadSample) -> Result<FeatureMatrix, FeatureError> {
    let violations = validate_sample(s);
    if !violations.is_empty() {
        return Err(FeatureError::Invalid(violations));
    }
    let dt = 1.0 / FPS;
    let mut m = FeatureMatrix::zeros(s.frames.len());
    let mut prev: Option<[(BodyPose, [f64; NUM_ANGLES]); 2]> = None;

    for (t, frame) in s.frames.iter().enumerate() {
        if !frame.is_complete() {
            prev = None;
            continue;
        }
        let row = m.row_mut(t);
        let mut current = [(BodyPose::default(), [0.0; NUM_ANGLES]); 2];
        for (slot, raw) in frame.bodies.iter().enumerate() {
            let pose = recenter_body(raw);
            let angles = AngleId::ALL.map(|a| joint_angle(&pose, a));
            let prev_body = prev.as_ref().map(|p| &p[slot]);
            let vel = joint_velocities(prev_body.map(|p| &p.0), &pose, dt)?;
            let mut omegas = [0.0; NUM_ANGLES];
            for k in 0..NUM_ANGLES {
                omegas[k] = angular_velocity(prev_body.map(|p| p.1[k]), angles[k].0, dt)?;
            }
            let block = &mut row[slot * SUBJECT_WIDTH..(slot + 1) * SUBJECT_WIDTH];
            write_subject(block, &pose, &vel, &angles, &omegas);
            current[slot] = (pose, angles.map(|a| a.0));
        }
        row[INTER_DISTANCE_COLUMN] = inter_distance(&frame.bodies[0], &frame.bodies[1]) as f32;
        prev = Some(current);
    }
    zero_occluded(&m, &s.occluded_frames)
}

/// Zeroes every column of the listed rows and records them as occluded.
pub fn zero_occluded(m: &FeatureMatrix, occluded: &BTreeSet<usize>) -> Result<FeatureMatrix, FeatureError> {
    if let Some(&bad) = occluded.iter().find(|&&t| t >= m.rows) {
        return Err(FeatureError::Argument(format!(
            "occluded frame {bad} out of range [0, {})",
            m.rows
        )));
    }
    let mut out = m.clone();
    for &t in occluded {
        out.row_mut(t).fill(0.0);
        out.occluded_frames.insert(t);
    }
    Ok(out)
}

/// Column names such as `s1_J_HEAD_x`, `s2_theta_ELBOW_RIGHT` and `Db`.
pub fn column_names() -> Vec<String> {
    let mut names = Vec::with_capacity(NUM_FEATURES);
    for s in 1..=2 {
        for kind in ["J", "V"] {
            for j in JointId::ALL {
                for axis in ["x", "y", "z"] {
                    names.push(format!("s{s}_{kind}_{j}_{axis}"));
                }
            }
        }
        for a in AngleId::ALL {
            let apex = a.apex();
            names.push(format!("s{s}_theta_{apex}"));
            names.push(format!("s{s}_omega_{apex}"));
            names.push(format!("s{s}_conf_{apex}"));
        }
        for d in DistanceId::ALL {
            let (a, b) = d.joints();
            names.push(format!("s{s}_D_{a}_{b}"));
        }
    }
    names.push("Db".to_string());
    names
}

/// `"FEAT0001"`, u32 rows, u32 cols, then row-major little-endian f32.
pub fn encode_features(m: &FeatureMatrix) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(FEATURE_MAGIC);
    w.u32(m.rows as u32);
    w.u32(NUM_FEATURES as u32);
    for &v in &m.data {
        w.f32(v);
    }
    w.into_inner()
}

/// Inverse of [`encode_features`]. The file does not store occlusion, so
/// rows that are entirely zero are reported as occluded.
pub fn decode_features(bytes: &[u8]) -> Result<FeatureMatrix, FeatureError> {
    let mut r = Reader::new(bytes);
    r.magic(FEATURE_MAGIC)?;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    if cols != NUM_FEATURES {
        return Err(FormatError::Invalid(format!("expected {NUM_FEATURES} columns, found {cols}")).into());
    }
    if rows.saturating_mul(cols).saturating_mul(4) != r.remaining() {
        return Err(FormatError::Invalid(format!(
            "payload of {} bytes does not match {rows}x{cols} f32",
            r.remaining()
        ))
        .into());
    }
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(r.f32()?);
    }
    let mut m = FeatureMatrix::from_vec(rows, data)?;
    m.occluded_frames = (0..rows).filter(|&t| m.row(t).iter().all(|&v| v == 0.0)).collect();
    Ok(m)
}

pub fn features_to_csv(m: &FeatureMatrix) -> String {
    let mut out = column_names().join(",");
    out.push('\n');
    for t in 0..m.rows {
        let row = m.row(t);
        for (c, v) in row.iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            write!(out, "{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    use super::*;
    use crate::skeleton::tests::static_sample;
    use crate::skeleton::{swap_subjects, InteractionLabel, FRAMES_PER_SAMPLE};

    #[test]
    fn column_bookkeeping() {
        assert_eq!(96 + 96 + 36 + 5, SUBJECT_WIDTH);
        assert_eq!(NUM_FEATURES, 467);
        assert_eq!(column_names().len(), NUM_FEATURES);
        assert_eq!(column_names()[INTER_DISTANCE_COLUMN], "Db");
        assert_eq!(column_names()[SUBJECT_WIDTH], "s2_J_PELVIS_x");
    }

    #[test]
    fn angle_table() {
        assert_eq!(
            AngleId::ElbowRight.joints(),
            (JointId::WristRight, JointId::ElbowRight, JointId::ShoulderRight)
        );
        let apexes: BTreeSet<_> = AngleId::ALL.iter().map(|a| a.apex()).collect();
        assert_eq!(apexes.len(), NUM_ANGLES);
        for (i, a) in AngleId::ALL.iter().enumerate() {
            assert_eq!(a.index(), i);
            assert_eq!(AngleId::at_apex(a.apex()), Some(*a));
        }
    }

    #[test]
    fn recenter_moves_spine_to_origin() {
        let mut p = BodyPose::default();
        p.joints[JointId::SpineNaval.index()] = Vec3::new(100.0, 200.0, 300.0);
        p.joints[JointId::Head.index()] = Vec3::new(100.0, 700.0, 300.0);
        let r = recenter_body(&p);
        assert_eq!(r.joint(JointId::SpineNaval), Vec3::ZERO);
        assert_eq!(r.joint(JointId::Head), Vec3::new(0.0, 500.0, 0.0));
        assert_eq!(r.joint(JointId::Pelvis), Vec3::new(-100.0, -200.0, -300.0));
        assert_eq!(recenter_body(&r), r);
    }

    #[test]
    fn velocity_cases() {
        let a = BodyPose::default();
        let mut b = a;
        b.joints[4].x += 1.0;
        let dt = 1.0 / 30.0;
        let v = joint_velocities(Some(&a), &b, dt).unwrap();
        assert!((v[4].x - 30.0).abs() < 1e-9);
        assert_eq!(v[5], Vec3::ZERO);
        assert!(joint_velocities(None, &b, dt).unwrap().iter().all(|v| *v == Vec3::ZERO));
        assert!(joint_velocities(Some(&a), &b, 0.0).is_err());
        assert!(joint_velocities(Some(&a), &b, -1.0).is_err());
    }

    fn arm(wrist: Vec3, elbow: Vec3, shoulder: Vec3) -> BodyPose {
        let mut p = BodyPose::default();
        p.joints[JointId::WristRight.index()] = wrist;
        p.joints[JointId::ElbowRight.index()] = elbow;
        p.joints[JointId::ShoulderRight.index()] = shoulder;
        p
    }

    #[test]
    fn angle_cases() {
        let o = Vec3::ZERO;
        let straight = arm(Vec3::new(-300.0, 0.0, 0.0), o, Vec3::new(250.0, 0.0, 0.0));
        assert!((joint_angle(&straight, AngleId::ElbowRight).0 - PI).abs() < 1e-12);
        let right = arm(Vec3::new(0.0, 10.0, 0.0), o, Vec3::new(0.0, 0.0, 7.0));
        assert!((joint_angle(&right, AngleId::ElbowRight).0 - FRAC_PI_2).abs() < 1e-12);
        let (theta, c) =
            joint_angle(&arm(Vec3::new(1.0, 0.0, 0.0), o, Vec3::new(1.0, 1.0, 0.0)), AngleId::ElbowRight);
        assert!((theta - FRAC_PI_4).abs() < 1e-12);
        assert_eq!(c, Confidence::High);
        let collapsed = arm(o, o, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(joint_angle(&collapsed, AngleId::ElbowRight), (0.0, Confidence::None));
    }

    #[test]
    fn angular_velocity_cases() {
        let dt = 1.0 / 30.0;
        assert_eq!(angular_velocity(Some(1.2), 1.2, dt).unwrap(), 0.0);
        assert!((angular_velocity(Some(0.5), 0.6, dt).unwrap() - 3.0).abs() < 1e-9);
        assert_eq!(angular_velocity(None, 2.0, dt).unwrap(), 0.0);
        assert!(angular_velocity(Some(0.0), 1.0, 0.0).is_err());
    }

    #[test]
    fn distance_cases() {
        let mut a = BodyPose::default();
        let mut b = BodyPose::default();
        b.joints[JointId::SpineNaval.index()] = Vec3::new(3.0, 4.0, 0.0);
        a.joints[JointId::WristLeft.index()] = Vec3::new(5.0, 5.0, 5.0);
        a.joints[JointId::WristRight.index()] = Vec3::new(5.0, 5.0, 5.0);
        let d = distances(&a, &b);
        assert_eq!(d.inter, 5.0);
        assert_eq!(d.intra1[0], 0.0);
        assert!(d.intra1.iter().chain(d.intra2.iter()).all(|&x| x >= 0.0));
    }

    #[test]
    fn static_sample_has_zero_rates() {
        let m = extract_features(&static_sample(InteractionLabel::Waving)).unwrap();
        assert_eq!((m.rows(), m.cols()), (FRAMES_PER_SAMPLE, NUM_FEATURES));
        for t in 0..m.rows() {
            for s in 0..2 {
                let base = s * SUBJECT_WIDTH;
                assert!(m.row(t)[base + VELOCITY_OFFSET..base + ANGLE_OFFSET].iter().all(|&v| v == 0.0));
                for k in 0..NUM_ANGLES {
                    assert_eq!(m.get(t, base + ANGLE_OFFSET + 3 * k + 1), 0.0);
                }
            }
            assert_eq!(m.get(t, JointId::SpineNaval.index() * 3), 0.0);
            assert_eq!(m.get(t, INTER_DISTANCE_COLUMN), 1000.0);
        }
    }

    #[test]
    fn swap_exchanges_blocks_exactly() {
        let mut s = static_sample(InteractionLabel::Waving);
        for (t, f) in s.frames.iter_mut().enumerate() {
            f.bodies[0].joints[7].x += (t as f64 * 0.3).sin() * 50.0;
            f.bodies[1].joints[13].z -= t as f64 * 2.0;
        }
        let m = extract_features(&s).unwrap();
        let swapped = extract_features(&swap_subjects(&s)).unwrap();
        assert_eq!(swapped, m.swap_subject_blocks());
    }

    #[test]
    fn invalid_sample_is_rejected() {
        let mut s = static_sample(InteractionLabel::Waving);
        s.frames[2].bodies[0].joints[0].x = f64::INFINITY;
        assert!(matches!(extract_features(&s), Err(FeatureError::Invalid(v)) if v.len() == 1));
    }

    #[test]
    fn zeroing_cases() {
        let m = extract_features(&static_sample(InteractionLabel::Waving)).unwrap();
        assert_eq!(zero_occluded(&m, &BTreeSet::new()).unwrap(), m);
        let all: BTreeSet<usize> = (0..91).collect();
        let z = zero_occluded(&m, &all).unwrap();
        assert!(z.as_slice().iter().all(|&v| v == 0.0));
        let window: BTreeSet<usize> = (10..20).collect();
        let z = zero_occluded(&m, &window).unwrap();
        let zero_rows = (0..91).filter(|&t| z.row(t).iter().all(|&v| v == 0.0)).count();
        assert_eq!(zero_rows, 10);
        for t in (0..10).chain(20..91) {
            assert_eq!(z.row(t), m.row(t));
        }
        assert_eq!(zero_occluded(&z, &window).unwrap(), z);
        assert!(zero_occluded(&m, &[91].into_iter().collect()).is_err());
    }

    #[test]
    fn feature_file_round_trip() {
        let mut s = static_sample(InteractionLabel::Waving);
        for t in 30..40 {
            s.frames[t].bodies.pop();
            s.occluded_frames.insert(t);
        }
        let m = extract_features(&s).unwrap();
        let bytes = encode_features(&m);
        assert_eq!(&bytes[..8], FEATURE_MAGIC);
        assert_eq!(bytes.len(), 16 + 91 * 467 * 4);
        assert_eq!(decode_features(&bytes).unwrap(), m);
        assert!(decode_features(&bytes[..bytes.len() - 1]).is_err());
        let csv = features_to_csv(&m);
        assert_eq!(csv.lines().count(), 92);
    }
}
