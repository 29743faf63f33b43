//! Sliding-window assembly of 2D inputs and central-frame 3D targets.

use ndarray::{s, Array2, Array3, ArrayView3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::camera::{project_to_2d, CameraModel};
use super::skeleton::SkeletonSequence;
use crate::error::{Error, Result};
use crate::topology::NUM_JOINTS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowMeta {
    pub subject: String,
    pub action: String,
    pub sequence: Option<u32>,
    /// Frame index (from the skeleton file) of the central frame.
    pub frame_index: u64,
    /// Zero-based position of the central frame within its sequence.
    pub center: usize,
    /// Per-axis pixel mean subtracted from the window.
    pub mean: [f64; 2],
    /// Isotropic pixel scale divided out of the window.
    pub std: f64,
    /// Camera-frame position of the root joint in the central frame (mm).
    pub root: [f64; 3],
}

/// One training or evaluation example.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    /// `(T, 21, 2)` normalized 2D joints.
    pub input: Array3<f64>,
    /// `(21, 3)` camera-frame joints of the central frame relative to the root joint (mm).
    pub target: Array2<f64>,
    pub meta: WindowMeta,
}

impl WindowSample {
    pub fn window(&self) -> usize {
        self.input.len_of(Axis(0))
    }

    /// Camera-frame target with the root translation restored.
    pub fn absolute_target(&self) -> Array2<f64> {
        let mut out = self.target.clone();
        for mut row in out.rows_mut() {
            for (v, r) in row.iter_mut().zip(self.meta.root) {
                *v += r;
            }
        }
        out
    }

    /// Undoes the input normalization, giving pixel coordinates.
    pub fn denormalized_input(&self) -> Array3<f64> {
        let mut out = self.input.clone();
        for mut p in out.lanes_mut(Axis(2)) {
            p[0] = p[0] * self.meta.std + self.meta.mean[0];
            p[1] = p[1] * self.meta.std + self.meta.mean[1];
        }
        out
    }
}

/// Zero-mean per axis and unit isotropic std over all points of a `(T, J, 2)` window.
/// Returns the normalized window, the mean, and the scale (1 for degenerate windows).
pub fn normalize_window(window: ArrayView3<f64>) -> (Array3<f64>, [f64; 2], f64) {
    let n = (window.len() / 2).max(1) as f64;
    let mut mean = [0.0; 2];
    for p in window.lanes(Axis(2)) {
        mean[0] += p[0];
        mean[1] += p[1];
    }
    mean[0] /= n;
    mean[1] /= n;
    let mut var = 0.0;
    for p in window.lanes(Axis(2)) {
        var += (p[0] - mean[0]).powi(2) + (p[1] - mean[1]).powi(2);
    }
    let std = (var / (2.0 * n)).sqrt();
    let std = if std > 0.0 && std.is_finite() { std } else { 1.0 };
    let mut out = window.to_owned();
    for mut p in out.lanes_mut(Axis(2)) {
        p[0] = (p[0] - mean[0]) / std;
        p[1] = (p[1] - mean[1]) / std;
    }
    (out, mean, std)
}

/// Builds one sample per center frame with a full window on both sides.
///
/// `seq2d` is `(F, 21, 2)` pixels; `camera3d` is `(F, 21, 3)` camera-frame joints of
/// the same frames. Noise is drawn from a generator seeded with `seed`.
pub fn make_windows(
    seq2d: ArrayView3<f64>,
    seq3d: &SkeletonSequence,
    camera3d: ArrayView3<f64>,
    window: usize,
    noise_std: f64,
    seed: u64,
) -> Result<Vec<WindowSample>> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::validation(format!(
            "window length must be a positive odd integer, got {window}"
        )));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::validation(format!("noise_std must be finite and >= 0, got {noise_std}")));
    }
    let frames = seq3d.len();
    if seq2d.dim() != (frames, NUM_JOINTS, 2) {
        return Err(Error::shape(format!("({frames}, 21, 2)"), format!("{:?}", seq2d.dim())));
    }
    if camera3d.dim() != (frames, NUM_JOINTS, 3) {
        return Err(Error::shape(format!("({frames}, 21, 3)"), format!("{:?}", camera3d.dim())));
    }
    if frames < window {
        log::warn!(
            "sequence {}/{}/{:?} has {frames} frames, fewer than the window length {window}; no samples",
            seq3d.subject,
            seq3d.action,
            seq3d.sequence
        );
        return Ok(Vec::new());
    }
    let mut noisy = seq2d.to_owned();
    if noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_std).expect("validated std");
        noisy.mapv_inplace(|v| v + normal.sample(&mut rng));
    }
    let half = window / 2;
    let mut out = Vec::with_capacity(frames + 1 - window);
    for center in half..frames - half {
        let (input, mean, std) =
            normalize_window(noisy.slice(s![center - half..=center + half, .., ..]));
        let frame = camera3d.index_axis(Axis(0), center);
        let root = [frame[[0, 0]], frame[[0, 1]], frame[[0, 2]]];
        let mut target = frame.to_owned();
        for mut row in target.rows_mut() {
            for (v, r) in row.iter_mut().zip(root) {
                *v -= r;
            }
        }
        out.push(WindowSample {
            input,
            target,
            meta: WindowMeta {
                subject: seq3d.subject.clone(),
                action: seq3d.action.clone(),
                sequence: seq3d.sequence,
                frame_index: seq3d.frame_indices[center],
                center,
                mean,
                std,
                root,
            },
        });
    }
    Ok(out)
}

/// Projects every sequence and windows it. Sequence `i` draws noise from `seed + i`.
pub fn build_windows(
    sequences: &[SkeletonSequence],
    camera: &CameraModel,
    window: usize,
    noise_std: f64,
    seed: u64,
) -> Result<Vec<WindowSample>> {
    let mut out = Vec::new();
    for (i, seq) in sequences.iter().enumerate() {
        let seq2d = project_to_2d(seq.joints.view(), camera)?;
        let cam3d = camera.skeletons_to_camera(seq.joints.view());
        out.extend(make_windows(
            seq2d.view(),
            seq,
            cam3d.view(),
            window,
            noise_std,
            seed.wrapping_add(i as u64),
        )?);
    }
    Ok(out)
}
