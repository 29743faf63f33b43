//! Forward-kinematics synthetic hand sequences.
//!
//! Each finger is a planar chain: the wrist-to-MCP bone is fixed in the hand
//! frame, the MCP adds abduction about the palm normal, and flexion angles
//! accumulate along the phalanges. A rigid per-frame transform then places
//! the hand in front of the camera.

use nalgebra::{Rotation3, Unit, Vector3};
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::camera::CameraModel;
use super::skeleton::SkeletonSequence;
use crate::topology::{NUM_FINGERS, NUM_JOINTS};

/// Bone lengths in mm, per finger (thumb to pinky), from the wrist outward.
pub const BONE_LENGTHS: [[f64; 4]; NUM_FINGERS] = [
    [40.0, 35.0, 30.0, 25.0],
    [85.0, 42.0, 25.0, 22.0],
    [82.0, 45.0, 28.0, 23.0],
    [78.0, 42.0, 27.0, 23.0],
    [72.0, 33.0, 21.0, 20.0],
];

/// In-palm angle of each wrist-to-MCP bone from the middle finger axis (radians).
const SPLAY: [f64; NUM_FINGERS] = [0.85, 0.2, 0.0, -0.18, -0.36];

/// Out-of-palm tilt of each finger plane (radians); the thumb sits lower.
const TILT: [f64; NUM_FINGERS] = [-0.45, 0.0, 0.0, 0.0, 0.0];

pub const SUBJECT: &str = "Subject_1";

/// Camera shared by all generated sequences; the hand stays 300-500 mm in front of it.
pub fn synthetic_camera() -> CameraModel {
    CameraModel {
        fx: 600.0,
        fy: 600.0,
        u0: 320.0,
        v0: 240.0,
        extrinsics: None,
    }
}

/// Sequence `i` belongs to action `synthetic_{i / 4}` with sequence number `i % 4 + 1`.
pub fn synthetic_ids(i: usize) -> (String, u32) {
    (format!("synthetic_{}", i / 4), (i % 4 + 1) as u32)
}

#[derive(Debug, Clone, Copy)]
struct Wave {
    base: f64,
    amp: f64,
    freq: f64,
    phase: f64,
}

impl Wave {
    fn random<R: Rng>(rng: &mut R, base: (f64, f64), amp: (f64, f64)) -> Self {
        Self {
            base: rng.random_range(base.0..=base.1),
            amp: rng.random_range(amp.0..=amp.1),
            freq: rng.random_range(0.05..0.25),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        }
    }

    fn at(&self, t: f64) -> f64 {
        self.base + self.amp * (self.freq * t + self.phase).sin()
    }
}

struct FingerMotion {
    abduction: Wave,
    flexion: [Wave; 3],
}

struct HandMotion {
    fingers: Vec<FingerMotion>,
    euler: [Wave; 3],
    translation: [Wave; 3],
}

impl HandMotion {
    fn random<R: Rng>(rng: &mut R) -> Self {
        let fingers = (0..NUM_FINGERS)
            .map(|_| FingerMotion {
                abduction: Wave::random(rng, (-0.05, 0.05), (0.0, 0.12)),
                flexion: [
                    Wave::random(rng, (0.35, 0.7), (0.1, 0.35)),
                    Wave::random(rng, (0.35, 0.8), (0.1, 0.4)),
                    Wave::random(rng, (0.2, 0.5), (0.05, 0.2)),
                ],
            })
            .collect();
        let pi = std::f64::consts::PI;
        Self {
            fingers,
            euler: [
                Wave::random(rng, (-0.6, 0.6), (0.0, 0.3)),
                Wave::random(rng, (-0.6, 0.6), (0.0, 0.3)),
                Wave::random(rng, (-pi, pi), (0.0, 0.3)),
            ],
            translation: [
                Wave::random(rng, (-60.0, 60.0), (0.0, 20.0)),
                Wave::random(rng, (-60.0, 60.0), (0.0, 20.0)),
                Wave::random(rng, (400.0, 460.0), (0.0, 20.0)),
            ],
        }
    }

    /// Joints of frame `t` in the hand frame (wrist at origin, fingers along +y).
    fn local_pose(&self, t: f64) -> [Vector3<f64>; NUM_JOINTS] {
        let mut joints = [Vector3::zeros(); NUM_JOINTS];
        let palm_normal = Vector3::z();
        for (f, motion) in self.fingers.iter().enumerate() {
            let splay = Rotation3::from_axis_angle(&Vector3::z_axis(), SPLAY[f]);
            let forward0 = splay * Vector3::y();
            let lateral = Unit::new_normalize(forward0.cross(&palm_normal));
            let tilt = Rotation3::from_axis_angle(&lateral, TILT[f]);
            let forward0 = tilt * forward0;
            let normal = tilt * palm_normal;
            let mcp = forward0 * BONE_LENGTHS[f][0];
            let abduct = Rotation3::from_axis_angle(&Unit::new_normalize(normal), motion.abduction.at(t));
            let forward = abduct * forward0;
            let chain = [1 + f, 6 + 3 * f, 7 + 3 * f, 8 + 3 * f];
            joints[chain[0]] = mcp;
            let mut pos = mcp;
            let mut bend = 0.0;
            for k in 0..3 {
                bend += motion.flexion[k].at(t);
                let dir = forward * bend.cos() - normal * bend.sin();
                pos += dir * BONE_LENGTHS[f][k + 1];
                joints[chain[k + 1]] = pos;
            }
        }
        joints
    }

    fn rigid(&self, t: f64) -> (Rotation3<f64>, Vector3<f64>) {
        let e = self.euler.map(|w| w.at(t));
        let tr = self.translation.map(|w| w.at(t));
        (
            Rotation3::from_euler_angles(e[0], e[1], e[2]),
            Vector3::new(tr[0], tr[1], tr[2]),
        )
    }
}

/// Generates `num_sequences` sequences of `frames_per_seq` frames each, deterministic in `seed`.
pub fn generate_synthetic(
    num_sequences: usize,
    frames_per_seq: usize,
    seed: u64,
) -> Vec<(SkeletonSequence, CameraModel)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let camera = synthetic_camera();
    (0..num_sequences)
        .map(|i| {
            let motion = HandMotion::random(&mut rng);
            let mut joints = Array3::zeros((frames_per_seq, NUM_JOINTS, 3));
            for frame in 0..frames_per_seq {
                let t = frame as f64;
                let (rot, trans) = motion.rigid(t);
                for (j, p) in motion.local_pose(t).iter().enumerate() {
                    let w = rot * p + trans;
                    for d in 0..3 {
                        joints[[frame, j, d]] = w[d];
                    }
                }
            }
            let (action, number) = synthetic_ids(i);
            let seq = SkeletonSequence::new((0..frames_per_seq as u64).collect(), joints)
                .expect("generator output satisfies sequence invariants")
                .with_ids(SUBJECT, &action, Some(number));
            (seq, camera.clone())
        })
        .collect()
}
