//! Canonical two-body skeleton data model.
//!
//! Joint indices follow the Azure Kinect body-tracking hierarchy: `PELVIS = 0`,
//! `SPINE_NAVAL = 1`, then chest, neck, the left arm chain, the right arm
//! chain, both legs and finally the face joints. Coordinates are millimeters
//! in the sensor's camera frame.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

/// Frames in every capture (three seconds at 30 fps plus the closing frame).
pub const FRAMES_PER_SAMPLE: usize = 91;
pub const FPS: f64 = 30.0;
pub const NUM_JOINTS: usize = 32;
pub const NUM_CLASSES: usize = 12;

macro_rules! joints {
    ($($variant:ident = $idx:expr, $name:literal;)*) => {
        /// One of the 32 tracked body joints.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        #[repr(u8)]
        pub enum JointId {
            $($variant = $idx,)*
        }

        impl JointId {
            pub const ALL: [JointId; NUM_JOINTS] = [$(JointId::$variant,)*];

            pub fn name(self) -> &'static str {
                match self {
                    $(JointId::$variant => $name,)*
                }
            }
        }
    };
}

joints! {
    Pelvis = 0, "PELVIS";
    SpineNaval = 1, "SPINE_NAVAL";
    SpineChest = 2, "SPINE_CHEST";
    Neck = 3, "NECK";
    ClavicleLeft = 4, "CLAVICLE_LEFT";
    ShoulderLeft = 5, "SHOULDER_LEFT";
    ElbowLeft = 6, "ELBOW_LEFT";
    WristLeft = 7, "WRIST_LEFT";
    HandLeft = 8, "HAND_LEFT";
    HandtipLeft = 9, "HANDTIP_LEFT";
    ThumbLeft = 10, "THUMB_LEFT";
    ClavicleRight = 11, "CLAVICLE_RIGHT";
    ShoulderRight = 12, "SHOULDER_RIGHT";
    ElbowRight = 13, "ELBOW_RIGHT";
    WristRight = 14, "WRIST_RIGHT";
    HandRight = 15, "HAND_RIGHT";
    HandtipRight = 16, "HANDTIP_RIGHT";
    ThumbRight = 17, "THUMB_RIGHT";
    HipLeft = 18, "HIP_LEFT";
    KneeLeft = 19, "KNEE_LEFT";
    AnkleLeft = 20, "ANKLE_LEFT";
    FootLeft = 21, "FOOT_LEFT";
    HipRight = 22, "HIP_RIGHT";
    KneeRight = 23, "KNEE_RIGHT";
    AnkleRight = 24, "ANKLE_RIGHT";
    FootRight = 25, "FOOT_RIGHT";
    Head = 26, "HEAD";
    Nose = 27, "NOSE";
    EyeLeft = 28, "EYE_LEFT";
    EarLeft = 29, "EAR_LEFT";
    EyeRight = 30, "EYE_RIGHT";
    EarRight = 31, "EAR_RIGHT";
}

impl JointId {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<JointId> {
        JointId::ALL.get(index).copied()
    }

    /// Parent in the body hierarchy; `None` for the pelvis root.
    pub fn parent(self) -> Option<JointId> {
        use JointId::*;
        Some(match self {
            Pelvis => return None,
            SpineNaval => Pelvis,
            SpineChest => SpineNaval,
            Neck => SpineChest,
            ClavicleLeft => SpineChest,
            ShoulderLeft => ClavicleLeft,
            ElbowLeft => ShoulderLeft,
            WristLeft => ElbowLeft,
            HandLeft => WristLeft,
            HandtipLeft => HandLeft,
            ThumbLeft => WristLeft,
            ClavicleRight => SpineChest,
            ShoulderRight => ClavicleRight,
            ElbowRight => ShoulderRight,
            WristRight => ElbowRight,
            HandRight => WristRight,
            HandtipRight => HandRight,
            ThumbRight => WristRight,
            HipLeft => Pelvis,
            KneeLeft => HipLeft,
            AnkleLeft => KneeLeft,
            FootLeft => AnkleLeft,
            HipRight => Pelvis,
            KneeRight => HipRight,
            AnkleRight => KneeRight,
            FootRight => AnkleRight,
            Head => Neck,
            Nose => Head,
            EyeLeft => Head,
            EarLeft => Head,
            EyeRight => Head,
            EarRight => Head,
        })
    }
}

/// The 31 (parent, child) bones of the body hierarchy, in child order.
pub fn bones() -> Vec<(JointId, JointId)> {
    JointId::ALL
        .iter()
        .filter_map(|&j| j.parent().map(|p| (p, j)))
        .collect()
}

impl fmt::Display for JointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for JointId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        JointId::ALL
            .iter()
            .copied()
            .find(|j| j.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown joint `{s}`"))
    }
}

/// Tracker confidence for a single joint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
#[repr(u8)]
pub enum Confidence {
    None = 0,
    Low = 1,
    Medium = 2,
    #[default]
    High = 3,
}

impl Confidence {
    pub fn from_ordinal(v: u8) -> Option<Confidence> {
        match v {
            0 => Some(Confidence::None),
            1 => Some(Confidence::Low),
            2 => Some(Confidence::Medium),
            3 => Some(Confidence::High),
            _ => None,
        }
    }

    /// Accepts only the exact values 0.0, 1.0, 2.0 and 3.0.
    pub fn from_f64(v: f64) -> Option<Confidence> {
        if v.fract() != 0.0 || !(0.0..=3.0).contains(&v) {
            return None;
        }
        Confidence::from_ordinal(v as u8)
    }

    pub fn ordinal(self) -> u8 {
        self as u8
    }

    pub fn as_f64(self) -> f64 {
        self as u8 as f64
    }
}

/// One tracked body in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyPose {
    pub joints: [Vec3; NUM_JOINTS],
    pub confidences: [Confidence; NUM_JOINTS],
}

impl Default for BodyPose {
    fn default() -> Self {
        BodyPose {
            joints: [Vec3::ZERO; NUM_JOINTS],
            confidences: [Confidence::High; NUM_JOINTS],
        }
    }
}

impl BodyPose {
    pub fn joint(&self, j: JointId) -> Vec3 {
        self.joints[j.index()]
    }

    pub fn confidence(&self, j: JointId) -> Confidence {
        self.confidences[j.index()]
    }

    pub fn translated(&self, offset: Vec3) -> BodyPose {
        let mut out = *self;
        for p in out.joints.iter_mut() {
            *p += offset;
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.joints.iter().all(|p| p.is_finite())
    }
}

/// One frame holding zero, one or two bodies in subject order.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadFrame {
    pub t: u32,
    pub bodies: Vec<BodyPose>,
}

impl DyadFrame {
    pub fn timestamp(&self) -> f64 {
        self.t as f64 * (1.0 / FPS)
    }

    pub fn is_complete(&self) -> bool {
        self.bodies.len() == 2
    }
}

/// Ekman's five functional categories of communicative body movement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Emblem,
    Illustrator,
    AffectDisplay,
    Regulator,
    Adaptor,
}

impl Category {
    pub fn name(self) -> &'static str {
        match self {
            Category::Emblem => "emblem",
            Category::Illustrator => "illustrator",
            Category::AffectDisplay => "affect_display",
            Category::Regulator => "regulator",
            Category::Adaptor => "adaptor",
        }
    }
}

/// The twelve dyadic interaction classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum InteractionLabel {
    WavingIn = 0,
    ThumbsUp = 1,
    Waving = 2,
    Pointing = 3,
    ShowingMeasurements = 4,
    Hugging = 5,
    Laughing = 6,
    ArmCrossing = 7,
    Nodding = 8,
    WritingCircles = 9,
    HoldingPalmsOut = 10,
    TwirlingHair = 11,
}

impl InteractionLabel {
    pub const ALL: [InteractionLabel; NUM_CLASSES] = [
        InteractionLabel::WavingIn,
        InteractionLabel::ThumbsUp,
        InteractionLabel::Waving,
        InteractionLabel::Pointing,
        InteractionLabel::ShowingMeasurements,
        InteractionLabel::Hugging,
        InteractionLabel::Laughing,
        InteractionLabel::ArmCrossing,
        InteractionLabel::Nodding,
        InteractionLabel::WritingCircles,
        InteractionLabel::HoldingPalmsOut,
        InteractionLabel::TwirlingHair,
    ];

    pub fn class_id(self) -> usize {
        self as usize
    }

    pub fn from_class_id(id: usize) -> Option<InteractionLabel> {
        InteractionLabel::ALL.get(id).copied()
    }

    pub fn name(self) -> &'static str {
        use InteractionLabel::*;
        match self {
            WavingIn => "waving_in",
            ThumbsUp => "thumbs_up",
            Waving => "waving",
            Pointing => "pointing",
            ShowingMeasurements => "showing_measurements",
            Hugging => "hugging",
            Laughing => "laughing",
            ArmCrossing => "arm_crossing",
            Nodding => "nodding",
            WritingCircles => "writing_circles",
            HoldingPalmsOut => "holding_palms_out",
            TwirlingHair => "twirling_hair",
        }
    }

    pub fn category(self) -> Category {
        use InteractionLabel::*;
        match self {
            WavingIn | ThumbsUp | Waving => Category::Emblem,
            Pointing | ShowingMeasurements => Category::Illustrator,
            Hugging | Laughing | ArmCrossing => Category::AffectDisplay,
            Nodding | WritingCircles | HoldingPalmsOut => Category::Regulator,
            TwirlingHair => Category::Adaptor,
        }
    }
}

impl fmt::Display for InteractionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown interaction label `{0}`")]
pub struct UnknownLabel(pub String);

impl FromStr for InteractionLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        InteractionLabel::ALL
            .iter()
            .copied()
            .find(|l| l.name() == s)
            .ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

/// Rule deciding whether a frame counts as occluded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcclusionRule {
    /// A body with more than this fraction of `NONE`-confidence joints makes
    /// the frame occluded.
    pub none_fraction: f64,
}

impl Default for OcclusionRule {
    fn default() -> Self {
        OcclusionRule { none_fraction: 0.25 }
    }
}

impl OcclusionRule {
    pub fn is_occluded(&self, frame: &DyadFrame) -> bool {
        if frame.bodies.len() < 2 {
            return true;
        }
        let limit = self.none_fraction * NUM_JOINTS as f64;
        frame.bodies.iter().any(|b| {
            let none = b.confidences.iter().filter(|&&c| c == Confidence::None).count();
            none as f64 > limit
        })
    }
}

/// One labeled capture of two tracked bodies.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadSample {
    pub sample_id: String,
    pub pair_id: String,
    pub label: InteractionLabel,
    pub frames: Vec<DyadFrame>,
    pub occluded_frames: BTreeSet<usize>,
}

impl DyadSample {
    /// Recomputes `occluded_frames` from the frames under `rule`, keeping any
    /// indices that were already marked.
    pub fn mark_occlusions(&mut self, rule: &OcclusionRule) {
        for (i, f) in self.frames.iter().enumerate() {
            if rule.is_occluded(f) {
                self.occluded_frames.insert(i);
            }
        }
    }

    pub fn is_occluded(&self) -> bool {
        !self.occluded_frames.is_empty()
    }
}

/// Reverses the subject order in every frame.
pub fn swap_subjects(s: &DyadSample) -> DyadSample {
    let mut out = s.clone();
    for f in out.frames.iter_mut() {
        f.bodies.reverse();
    }
    out
}

/// A single broken invariant found by [`validate_sample`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub frame: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.frame {
            Some(t) => write!(f, "{} (frame {}): {}", self.field, t, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

pub fn validate_sample(s: &DyadSample) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |field: String, frame: Option<usize>, message: String| {
        out.push(Violation { field, frame, message })
    };

    if s.sample_id.is_empty() {
        push("sample_id".into(), None, "empty sample id".into());
    }
    if s.frames.len() != FRAMES_PER_SAMPLE {
        push(
            "frames".into(),
            None,
            format!("expected {FRAMES_PER_SAMPLE} frames, found {}", s.frames.len()),
        );
    }
    for (i, f) in s.frames.iter().enumerate() {
        if f.t as usize != i {
            push("t".into(), Some(i), format!("frame index {} out of sequence", f.t));
        }
        if f.bodies.len() > 2 {
            push("bodies".into(), Some(i), format!("{} bodies, at most 2 allowed", f.bodies.len()));
        }
        for (m, b) in f.bodies.iter().enumerate() {
            for (n, p) in b.joints.iter().enumerate() {
                if !p.is_finite() {
                    push(
                        format!("bodies[{m}].joints[{}]", JointId::ALL[n]),
                        Some(i),
                        "non-finite coordinate".into(),
                    );
                }
            }
        }
        if f.bodies.len() < 2 && !s.occluded_frames.contains(&i) {
            push(
                "occluded_frames".into(),
                Some(i),
                format!("frame has {} bodies but is not marked occluded", f.bodies.len()),
            );
        }
    }
    for &t in &s.occluded_frames {
        if t >= FRAMES_PER_SAMPLE {
            push(
                "occluded_frames".into(),
                Some(t),
                format!("index out of range [0, {FRAMES_PER_SAMPLE})"),
            );
        }
    }
    out
}
