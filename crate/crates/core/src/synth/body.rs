//! Procedural body model: limb lengths plus a handful of pose controls,
//! posed in a body-local frame (y up, facing +z, subject's left at +x).

use crate::geometry::Vec3;
use crate::skeleton::{BodyPose, JointId, NUM_JOINTS};

/// Limb lengths of one person (mm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Build {
    pub pelvis_height: f64,
    pub spine: f64,
    pub neck: f64,
    pub head: f64,
    pub shoulder_width: f64,
    pub hip_width: f64,
    pub upper_arm: f64,
    pub forearm: f64,
    pub hand: f64,
    pub thigh: f64,
    pub shin: f64,
}

impl Build {
    pub fn scaled(scale: f64) -> Build {
        Build {
            pelvis_height: 930.0 * scale,
            spine: 195.0 * scale,
            neck: 190.0 * scale,
            head: 130.0 * scale,
            shoulder_width: 180.0 * scale,
            hip_width: 100.0 * scale,
            upper_arm: 290.0 * scale,
            forearm: 260.0 * scale,
            hand: 85.0 * scale,
            thigh: 440.0 * scale,
            shin: 420.0 * scale,
        }
    }
}

/// Arm directions in the arm's own mirrored frame: x points outward from the
/// body, y up, z forward. The same value therefore poses either arm
/// symmetrically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmPose {
    pub upper: Vec3,
    pub fore: Vec3,
    pub hand: Vec3,
    pub thumb: Vec3,
}

impl ArmPose {
    pub fn new(upper: Vec3, fore: Vec3) -> ArmPose {
        let fore = fore.normalized();
        ArmPose { upper: upper.normalized(), fore, hand: fore, thumb: (fore + Vec3::new(0.0, 0.0, 0.4)).normalized() }
    }

    pub fn with_hand(mut self, hand: Vec3) -> ArmPose {
        self.hand = hand.normalized();
        self
    }

    pub fn with_thumb(mut self, thumb: Vec3) -> ArmPose {
        self.thumb = thumb.normalized();
        self
    }

    pub fn rest() -> ArmPose {
        ArmPose::new(Vec3::new(0.15, -1.0, 0.0), Vec3::new(0.05, -1.0, 0.12))
    }

    /// Component-wise blend `(1 - w) * self + w * other`, renormalized.
    pub fn blend(&self, other: &ArmPose, w: f64) -> ArmPose {
        let mix = |a: Vec3, b: Vec3| (a * (1.0 - w) + b * w).normalized();
        ArmPose {
            upper: mix(self.upper, other.upper),
            fore: mix(self.fore, other.fore),
            hand: mix(self.hand, other.hand),
            thumb: mix(self.thumb, other.thumb),
        }
    }
}

/// Pose controls for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseControls {
    /// Pelvis position on the floor plane (world x, z); height comes from the build.
    pub root: Vec3,
    /// Facing direction (radians about world y; 0 faces +z).
    pub yaw: f64,
    /// Forward lean of the upper body (radians, positive leans forward).
    pub torso_pitch: f64,
    pub torso_roll: f64,
    /// Head pitch (positive tips the face down), yaw and roll (radians).
    pub head_pitch: f64,
    pub head_yaw: f64,
    pub head_roll: f64,
    /// Vertical shoulder offset (mm).
    pub shoulder_lift: f64,
    pub left_arm: ArmPose,
    pub right_arm: ArmPose,
    /// Knee flexion (radians), left and right.
    pub knee_flex: [f64; 2],
    /// Forward foot offset (mm), left and right.
    pub step: [f64; 2],
}

impl Default for PoseControls {
    fn default() -> Self {
        PoseControls {
            root: Vec3::ZERO,
            yaw: 0.0,
            torso_pitch: 0.0,
            torso_roll: 0.0,
            head_pitch: 0.0,
            head_yaw: 0.0,
            head_roll: 0.0,
            shoulder_lift: 0.0,
            left_arm: ArmPose::rest(),
            right_arm: ArmPose::rest(),
            knee_flex: [0.05, 0.05],
            step: [0.0, 0.0],
        }
    }
}

/// Poses a body in world coordinates (mm, y up).
pub fn pose_body(build: &Build, c: &PoseControls) -> [Vec3; NUM_JOINTS] {
    use JointId as J;
    let mut p = [Vec3::ZERO; NUM_JOINTS];
    let torso = |v: Vec3| v.rotate_z(c.torso_roll).rotate_x(c.torso_pitch);
    let head_rot = |v: Vec3| torso(v.rotate_z(c.head_roll).rotate_x(c.head_pitch).rotate_y(c.head_yaw));

    let pelvis = Vec3::new(0.0, build.pelvis_height, 0.0);
    p[J::Pelvis.index()] = pelvis;
    p[J::SpineNaval.index()] = pelvis + torso(Vec3::new(0.0, build.spine, 0.0));
    let chest = pelvis + torso(Vec3::new(0.0, 2.0 * build.spine, 0.0));
    p[J::SpineChest.index()] = chest;
    let neck = chest + torso(Vec3::new(0.0, build.neck, 0.0));
    p[J::Neck.index()] = neck;

    let head = neck + head_rot(Vec3::new(0.0, build.head, 0.0));
    p[J::Head.index()] = head;
    p[J::Nose.index()] = head + head_rot(Vec3::new(0.0, -25.0, 100.0));
    p[J::EyeLeft.index()] = head + head_rot(Vec3::new(35.0, 10.0, 80.0));
    p[J::EyeRight.index()] = head + head_rot(Vec3::new(-35.0, 10.0, 80.0));
    p[J::EarLeft.index()] = head + head_rot(Vec3::new(75.0, -5.0, 0.0));
    p[J::EarRight.index()] = head + head_rot(Vec3::new(-75.0, -5.0, 0.0));

    let sides = [
        (1.0, &c.left_arm, [J::ClavicleLeft, J::ShoulderLeft, J::ElbowLeft, J::WristLeft, J::HandLeft, J::HandtipLeft, J::ThumbLeft]),
        (-1.0, &c.right_arm, [J::ClavicleRight, J::ShoulderRight, J::ElbowRight, J::WristRight, J::HandRight, J::HandtipRight, J::ThumbRight]),
    ];
    for (sign, arm, [clav, sh, el, wr, ha, tip, th]) in sides {
        let mirror = |v: Vec3| torso(Vec3::new(sign * v.x, v.y, v.z));
        let lift = Vec3::new(0.0, c.shoulder_lift, 0.0);
        p[clav.index()] = chest + torso(Vec3::new(sign * 40.0, 0.75 * build.neck, 0.0) + lift * 0.5);
        let shoulder = chest + torso(Vec3::new(sign * build.shoulder_width, 0.72 * build.neck, 0.0) + lift);
        p[sh.index()] = shoulder;
        let elbow = shoulder + mirror(arm.upper) * build.upper_arm;
        p[el.index()] = elbow;
        let wrist = elbow + mirror(arm.fore) * build.forearm;
        p[wr.index()] = wrist;
        p[ha.index()] = wrist + mirror(arm.hand) * build.hand;
        p[tip.index()] = wrist + mirror(arm.hand) * (2.0 * build.hand);
        p[th.index()] = wrist + mirror(arm.thumb) * (0.8 * build.hand);
    }

    let legs = [
        (1.0, 0, [J::HipLeft, J::KneeLeft, J::AnkleLeft, J::FootLeft]),
        (-1.0, 1, [J::HipRight, J::KneeRight, J::AnkleRight, J::FootRight]),
    ];
    for (sign, k, [hip_j, knee_j, ankle_j, foot_j]) in legs {
        let hip = pelvis + Vec3::new(sign * build.hip_width, -25.0, 0.0);
        p[hip_j.index()] = hip;
        let flex = c.knee_flex[k];
        let swing = (c.step[k] / (build.thigh + build.shin)).clamp(-0.6, 0.6);
        let thigh_dir = Vec3::new(0.0, -(swing + flex).cos(), (swing + flex).sin());
        let knee = hip + thigh_dir * build.thigh;
        p[knee_j.index()] = knee;
        let shin_dir = Vec3::new(0.0, -(swing - flex).cos(), (swing - flex).sin());
        let ankle = knee + shin_dir * build.shin;
        p[ankle_j.index()] = ankle;
        p[foot_j.index()] = ankle + Vec3::new(0.0, -45.0, 120.0);
    }

    for q in p.iter_mut() {
        *q = q.rotate_y(c.yaw) + c.root;
    }
    p
}

/// World (mm, y up) to sensor camera frame (mm; x right, y down, z forward).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraTransform {
    position: Vec3,
    right: Vec3,
    down: Vec3,
    forward: Vec3,
}

impl CameraTransform {
    /// Camera at `height` above the floor, `distance` behind the world origin
    /// along -z, looking toward +z and tilted down by `tilt` radians.
    pub fn new(height: f64, distance: f64, tilt: f64) -> Self {
        let forward = Vec3::new(0.0, -tilt.sin(), tilt.cos());
        let down = Vec3::new(0.0, -tilt.cos(), -tilt.sin());
        CameraTransform { position: Vec3::new(0.0, height, -distance), right: down.cross(forward), down, forward }
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        let r = p - self.position;
        Vec3::new(r.dot(self.right), r.dot(self.down), r.dot(self.forward))
    }

    pub fn pose(&self, joints: &[Vec3; NUM_JOINTS]) -> BodyPose {
        let mut out = BodyPose::default();
        for (o, j) in out.joints.iter_mut().zip(joints.iter()) {
            *o = self.apply(*j);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::bones;

    #[test]
    fn bone_lengths_do_not_depend_on_controls() {
        let build = Build::scaled(1.0);
        let a = pose_body(&build, &PoseControls::default());
        let c = PoseControls {
            root: Vec3::new(300.0, 0.0, -200.0),
            yaw: 1.1,
            torso_pitch: 0.3,
            head_pitch: 0.4,
            head_yaw: -0.3,
            shoulder_lift: 0.0,
            right_arm: ArmPose::new(Vec3::new(0.4, 0.5, 0.6), Vec3::new(0.0, 1.0, 0.2)),
            ..PoseControls::default()
        };
        let b = pose_body(&build, &c);
        for (p, ch) in bones() {
            let la = (a[p.index()] - a[ch.index()]).norm();
            let lb = (b[p.index()] - b[ch.index()]).norm();
            assert!((la - lb).abs() < 1e-9, "{p}->{ch}: {la} vs {lb}");
        }
    }

    #[test]
    fn camera_axes_are_orthonormal_and_right_handed() {
        let cam = CameraTransform::new(2210.0, 3522.0, 37f64.to_radians());
        assert!((cam.right.cross(cam.down) - cam.forward).norm() < 1e-12);
        // A point straight along the optical axis has x = y = 0.
        let p = cam.position + cam.forward * 1000.0;
        let q = cam.apply(p);
        assert!(q.x.abs() < 1e-9 && q.y.abs() < 1e-9 && (q.z - 1000.0).abs() < 1e-9);
        // Above the optical axis maps to negative y (image up).
        assert!(cam.apply(p + Vec3::new(0.0, 100.0, 0.0)).y < 0.0);
    }

    #[test]
    fn rest_pose_is_upright() {
        let p = pose_body(&Build::scaled(1.0), &PoseControls::default());
        assert!(p[JointId::Head.index()].y > p[JointId::SpineChest.index()].y);
        assert!(p[JointId::FootLeft.index()].y < 100.0);
        assert!(p[JointId::ShoulderLeft.index()].x > 0.0 && p[JointId::ShoulderRight.index()].x < 0.0);
    }
}
