//! Per-class motion templates. Each template maps time to local pose controls
//! for the instigator and the receiver; `root` offsets are in the performer's
//! own frame (x toward their left, z toward their partner).

use std::f64::consts::TAU;

use super::body::{ArmPose, PoseControls};
use crate::geometry::Vec3;
use crate::skeleton::InteractionLabel;

/// Random performance parameters drawn once per sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Performance {
    /// Start of the gesture (s).
    pub onset: f64,
    /// Multiplier on all gesture frequencies.
    pub tempo: f64,
    /// Multiplier on gesture amplitudes.
    pub amplitude: f64,
    pub phase: f64,
    /// Initial SPINE_NAVAL separation of the two performers (mm).
    pub separation: f64,
    /// Closest separation reached by approaching gestures (mm).
    pub close_separation: f64,
    pub idle_phase: [f64; 2],
}

fn v(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3::new(x, y, z)
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

impl Performance {
    /// Gesture envelope rising from 0 to 1 over `rise` seconds after `onset + delay`.
    fn env(&self, tau: f64, delay: f64, rise: f64) -> f64 {
        smoothstep((tau - self.onset - delay) / (rise / self.tempo))
    }

    fn osc(&self, tau: f64, hz: f64) -> f64 {
        (TAU * hz * self.tempo * tau + self.phase).sin()
    }

    fn osc_cos(&self, tau: f64, hz: f64) -> f64 {
        (TAU * hz * self.tempo * tau + self.phase).cos()
    }
}

fn idle(tau: f64, phase: f64, sway: bool) -> PoseControls {
    let mut c = PoseControls { shoulder_lift: 3.0 * (TAU * 0.3 * tau + phase).sin(), ..PoseControls::default() };
    if sway {
        c.torso_roll = 0.02 * (TAU * 0.25 * tau + 2.0 * phase).sin();
        c.head_yaw = 0.05 * (TAU * 0.2 * tau + phase).sin();
    }
    c
}

/// Local controls `[instigator, receiver]` at time `tau` seconds.
pub fn perform(label: InteractionLabel, tau: f64, p: &Performance) -> [PoseControls; 2] {
    use InteractionLabel::*;
    let sway = label != Hugging;
    let mut ins = idle(tau, p.idle_phase[0], sway);
    let mut rec = idle(tau, p.idle_phase[1], sway);
    let a = p.amplitude;
    let e = p.env(tau, 0.0, 0.4);
    let rest = ArmPose::rest();

    match label {
        WavingIn => {
            let beta = 0.9 + 0.45 * a * p.osc(tau, 1.6);
            let curl = beta + 0.7 + 0.35 * p.osc(tau, 1.6);
            let target = ArmPose::new(v(0.15, -0.35, 0.92), v(0.0, beta.sin(), beta.cos()))
                .with_hand(v(0.0, curl.sin(), curl.cos()));
            ins.right_arm = rest.blend(&target, e);
            let walk = p.env(tau, 0.9, 1.2);
            rec.root = v(0.0, 0.0, 180.0 * walk);
            rec.step = [110.0 * (TAU * 1.5 * tau).sin() * (walk * (1.0 - walk) * 4.0), 0.0];
            rec.head_pitch = -0.08 * e;
        }
        ThumbsUp => {
            let pump = 0.15 * a * p.osc(tau, 2.0) * e;
            let target = ArmPose::new(v(0.1, -0.75, 0.65), v(0.05, 0.45 + pump, 0.9))
                .with_hand(v(0.0, 0.3, 1.0))
                .with_thumb(v(0.0, 1.0, 0.0));
            ins.right_arm = rest.blend(&target, e);
            ins.head_pitch = -0.05 * e;
            let nod = p.env(tau, 1.1, 0.35) * (1.0 - p.env(tau, 1.6, 0.35));
            rec.head_pitch = 0.22 * nod;
        }
        Waving => {
            let gamma = 0.55 * a * p.osc(tau, 2.0);
            let target = ArmPose::new(v(0.9, 0.35, 0.05), v(gamma.sin(), gamma.cos(), 0.05));
            ins.right_arm = rest.blend(&target, e);
            let late = p.env(tau, 1.1, 0.4);
            let g2 = 0.35 * a * p.osc(tau, 1.8);
            rec.left_arm = rest.blend(&ArmPose::new(v(0.7, 0.4, 0.4), v(g2.sin(), g2.cos(), 0.2)), late);
        }
        Pointing => {
            let dir = v(0.85, 0.15, 0.5);
            ins.right_arm = rest.blend(&ArmPose::new(dir, dir).with_hand(v(0.85, 0.1, 0.55)), e);
            ins.head_yaw = -0.4 * e;
            let look = p.env(tau, 0.5, 0.5);
            rec.head_yaw = 0.45 * look;
            rec.yaw = 0.2 * look;
        }
        ShowingMeasurements => {
            let w = 0.25 + 0.3 * a * (0.5 + 0.5 * p.osc(tau, 0.9));
            let target = ArmPose::new(v(0.15, -0.55, 0.82), v(w, 0.05, 0.9))
                .with_hand(v(w, 0.0, 1.0))
                .with_thumb(v(0.0, 1.0, 0.0));
            ins.left_arm = rest.blend(&target, e);
            ins.right_arm = rest.blend(&target, e);
            rec.torso_pitch = 0.08 * e;
            rec.head_pitch = 0.2 * e;
        }
        Hugging => {
            // Linear approach so the SPINE_NAVAL separation shrinks every frame
            // until `close_time`.
            let close_time = 1.6;
            let progress = (tau / close_time).min(1.0);
            let closed = (p.separation - p.close_separation) * progress;
            let wrap = smoothstep(progress);
            let arms = ArmPose::new(v(0.45, 0.05, 0.9), v(-0.55, 0.05, 0.85));
            for (c, lag) in [(&mut ins, 0.0), (&mut rec, 0.15)] {
                c.root = v(0.0, 0.0, closed / 2.0);
                let w = smoothstep((progress - lag) / (1.0 - lag));
                c.left_arm = rest.blend(&arms, w);
                c.right_arm = rest.blend(&arms, w);
                c.torso_pitch = 0.12 * wrap;
                let stepping = if progress < 1.0 { 1.0 } else { 0.0 };
                c.step = [150.0 * (TAU * 1.6 * tau).sin() * stepping, -150.0 * (TAU * 1.6 * tau).sin() * stepping];
                if progress >= 1.0 {
                    c.torso_roll = 0.06 * (TAU * 0.7 * (tau - close_time)).sin();
                }
            }
        }
        Laughing => {
            let belly = ArmPose::new(v(0.3, -0.95, 0.1), v(-0.5, -0.35, 0.8));
            ins.shoulder_lift += 25.0 * a * p.osc(tau, 4.0) * e;
            ins.torso_pitch = (-0.12 + 0.08 * p.osc(tau, 2.0)) * e;
            ins.head_pitch = (-0.35 + 0.1 * p.osc(tau, 2.0)) * e;
            ins.left_arm = rest.blend(&belly, e);
            ins.right_arm = rest.blend(&belly, e);
            let late = p.env(tau, 0.6, 0.4);
            rec.shoulder_lift += 10.0 * a * p.osc(tau, 3.5) * late;
            rec.head_pitch = -0.15 * late;
        }
        ArmCrossing => {
            let e = p.env(tau, 0.0, 0.8);
            ins.left_arm = rest.blend(&ArmPose::new(v(0.25, -0.8, 0.55), v(-0.9, 0.35, 0.3)), e);
            ins.right_arm = rest.blend(&ArmPose::new(v(0.25, -0.8, 0.55), v(-0.9, 0.25, 0.35)), e);
            ins.torso_pitch = -0.05 * e;
            ins.head_roll = 0.05 * e;
            rec.root = v(40.0 * (TAU * 0.4 * tau).sin(), 0.0, 0.0);
            rec.knee_flex = [0.05 + 0.08 * (TAU * 0.4 * tau).sin().max(0.0), 0.05 + 0.08 * (-(TAU * 0.4 * tau).sin()).max(0.0)];
        }
        Nodding => {
            rec.head_pitch = (0.2 + 0.28 * a * p.osc(tau, 1.6)) * e;
            rec.torso_pitch = 0.06 * e;
            ins.head_yaw = 0.05 * (TAU * 0.5 * tau).sin();
            ins.head_pitch = -0.1 * e;
        }
        WritingCircles => {
            let (s, c) = (p.osc(tau, 1.3), p.osc_cos(tau, 1.3));
            let fore = v(0.45 + 0.3 * a * c, 0.35 + 0.3 * a * s, 0.85);
            let target = ArmPose::new(v(0.45, 0.25, 0.85), fore).with_hand(fore);
            ins.left_arm = rest.blend(&target, e);
            ins.head_yaw = 0.25 * e;
            rec.head_yaw = 0.1 * s * e;
        }
        HoldingPalmsOut => {
            let target = ArmPose::new(v(0.25, -0.05, 0.97), v(0.08, 0.35, 0.93)).with_hand(v(0.0, 1.0, 0.3));
            ins.left_arm = rest.blend(&target, e);
            ins.right_arm = rest.blend(&target, e);
            ins.torso_pitch = -0.04 * e;
            let back = p.env(tau, 0.8, 1.0);
            rec.root = v(0.0, 0.0, -220.0 * back);
            rec.step = [0.0, -120.0 * back * (1.0 - back) * 4.0];
            rec.head_pitch = -0.05 * e;
        }
        TwirlingHair => {
            let (s, c) = (p.osc(tau, 2.5), p.osc_cos(tau, 2.5));
            let fore = v(-0.45 + 0.15 * a * c, 0.85 + 0.12 * a * s, 0.1);
            let target = ArmPose::new(v(0.85, 0.45, 0.1), fore).with_hand(v(-0.6, 0.7, 0.2));
            ins.right_arm = rest.blend(&target, e);
            ins.head_roll = -0.3 * e;
            ins.torso_roll = -0.08 * e;
        }
    }
    [ins, rec]
}
