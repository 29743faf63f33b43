//! Pose, finger-length, Angle and Direction objectives with analytic gradients.
//!
//! All terms are sums over frames and elements of `(T, N, 3)` pose arrays in
//! millimeters. Angles are radians. Gradients are taken with respect to the
//! prediction only.

use ndarray::{Array3, ArrayView3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::HandTopology;

/// Dot-ratio clamp used when differentiating `arccos`.
pub const ANGLE_CLAMP_EPS: f64 = 1e-7;
/// Bone vectors shorter than this are treated as degenerate.
pub const DEGENERATE_NORM: f64 = 1e-8;

type Vec3 = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub pose: f64,
    pub finger: f64,
    pub angle: f64,
    pub direction: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            pose: 1.0,
            finger: 0.1,
            angle: 0.1,
            direction: 0.01,
        }
    }
}

impl LossWeights {
    pub fn new(pose: f64, finger: f64, angle: f64, direction: f64) -> Self {
        Self {
            pose,
            finger,
            angle,
            direction,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.pose, self.finger, self.angle, self.direction]
    }

    pub fn validate(&self) -> Result<()> {
        if self.as_array().iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(Error::validation(format!(
                "loss weights must be finite and nonnegative: {self:?}"
            )))
        }
    }
}

/// What "finger length" compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FingerLengthMode {
    /// Sum of the four bone lengths along each finger chain.
    #[default]
    Chain,
    /// Every bone length compared individually.
    Bone,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub weights: LossWeights,
    pub finger_length: FingerLengthMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossTerm {
    Pose,
    FingerLength,
    Angle,
    Direction,
}

impl LossTerm {
    pub const ALL: [LossTerm; 4] = [
        LossTerm::Pose,
        LossTerm::FingerLength,
        LossTerm::Angle,
        LossTerm::Direction,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossTerm::Pose => "pose",
            LossTerm::FingerLength => "finger_length",
            LossTerm::Angle => "angle",
            LossTerm::Direction => "direction",
        }
    }
}

/// Per-term values and their weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub pose: f64,
    pub finger: f64,
    pub angle: f64,
    pub direction: f64,
    pub total: f64,
    /// Angle evaluations skipped because a bone vector was (near) zero.
    pub degenerate: usize,
}

impl LossReport {
    pub fn term(&self, term: LossTerm) -> f64 {
        match term {
            LossTerm::Pose => self.pose,
            LossTerm::FingerLength => self.finger,
            LossTerm::Angle => self.angle,
            LossTerm::Direction => self.direction,
        }
    }
}

/// Angle between two vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Angle {
    pub radians: f64,
    /// Set when either vector is shorter than [`DEGENERATE_NORM`]; `radians` is then 0.
    pub degenerate: bool,
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Angle in `[0, pi]` between `a` and `b`.
pub fn angle_between(a: Vec3, b: Vec3) -> Result<Angle> {
    if a.iter().chain(&b).any(|v| !v.is_finite()) {
        return Err(Error::validation("angle_between: non-finite vector"));
    }
    Ok(match angle_with_grad(a, b) {
        Some((radians, _, _)) => Angle {
            radians,
            degenerate: false,
        },
        None => Angle {
            radians: 0.0,
            degenerate: true,
        },
    })
}

/// Angle and its gradients with respect to both vectors, or `None` when degenerate.
///
/// The value is `atan2(|a x b|, a . b)`, which is exact at parallel inputs.
/// The gradient is that of `arccos(c)` with the dot ratio `c` clamped to
/// `[-1 + eps, 1 - eps]`, so it stays finite at the endpoints.
fn angle_with_grad(a: Vec3, b: Vec3) -> Option<(f64, Vec3, Vec3)> {
    let na = norm(a);
    let nb = norm(b);
    if na < DEGENERATE_NORM || nb < DEGENERATE_NORM {
        return None;
    }
    let theta = norm(cross(a, b)).atan2(dot(a, b));
    let c = dot(a, b) / (na * nb);
    let clamped = c.clamp(-1.0 + ANGLE_CLAMP_EPS, 1.0 - ANGLE_CLAMP_EPS);
    let dtheta_dc = if clamped == c {
        -1.0 / (1.0 - c * c).sqrt()
    } else {
        0.0
    };
    let mut ga = [0.0; 3];
    let mut gb = [0.0; 3];
    for d in 0..3 {
        ga[d] = dtheta_dc * (b[d] / (na * nb) - c * a[d] / (na * na));
        gb[d] = dtheta_dc * (a[d] / (na * nb) - c * b[d] / (nb * nb));
    }
    Some((theta, ga, gb))
}

fn check_pair(gt: &ArrayView3<f64>, pred: &ArrayView3<f64>, joints: Option<usize>) -> Result<()> {
    if gt.dim() != pred.dim() {
        return Err(Error::shape(format!("{:?}", gt.dim()), format!("{:?}", pred.dim())));
    }
    let (_, n, d) = gt.dim();
    if d != 3 || joints.is_some_and(|j| j != n) {
        return Err(Error::shape(
            format!("(T, {}, 3)", joints.unwrap_or(n)),
            format!("{:?}", gt.dim()),
        ));
    }
    if gt.iter().chain(pred.iter()).any(|v| !v.is_finite()) {
        return Err(Error::validation("loss input contains non-finite coordinates"));
    }
    Ok(())
}

fn joint(p: &ArrayView3<f64>, t: usize, j: usize) -> Vec3 {
    [p[[t, j, 0]], p[[t, j, 1]], p[[t, j, 2]]]
}

fn bone(p: &ArrayView3<f64>, topo: &HandTopology, t: usize, b: usize) -> Vec3 {
    let bone = topo.bones()[b];
    let (c, q) = (joint(p, t, bone.child), joint(p, t, bone.parent));
    [c[0] - q[0], c[1] - q[1], c[2] - q[2]]
}

/// Adds `g` to the child joint and subtracts it from the parent joint of bone `b`.
fn scatter_bone(grad: &mut Array3<f64>, topo: &HandTopology, t: usize, b: usize, g: Vec3) {
    let bone = topo.bones()[b];
    for d in 0..3 {
        grad[[t, bone.child, d]] += g[d];
        grad[[t, bone.parent, d]] -= g[d];
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Default)]
struct TermOut {
    value: f64,
    degenerate: usize,
}

fn pose_term(gt: &ArrayView3<f64>, pred: &ArrayView3<f64>, mut grad: Option<&mut Array3<f64>>) -> TermOut {
    let (frames, joints, _) = gt.dim();
    let mut value = 0.0;
    for t in 0..frames {
        for j in 0..joints {
            let (x, y) = (joint(gt, t, j), joint(pred, t, j));
            let diff = [y[0] - x[0], y[1] - x[1], y[2] - x[2]];
            let dist = norm(diff);
            value += dist;
            if let Some(g) = grad.as_deref_mut() {
                if dist > 0.0 {
                    for d in 0..3 {
                        g[[t, j, d]] += diff[d] / dist;
                    }
                }
            }
        }
    }
    TermOut {
        value,
        degenerate: 0,
    }
}

fn finger_term(
    gt: &ArrayView3<f64>,
    pred: &ArrayView3<f64>,
    topo: &HandTopology,
    mode: FingerLengthMode,
    mut grad: Option<&mut Array3<f64>>,
) -> TermOut {
    let groups: Vec<Vec<usize>> = match mode {
        FingerLengthMode::Chain => topo.finger_chains().iter().map(|c| c.to_vec()).collect(),
        FingerLengthMode::Bone => (0..topo.num_bones()).map(|b| vec![b]).collect(),
    };
    let mut value = 0.0;
    for t in 0..gt.dim().0 {
        for group in &groups {
            let len_gt: f64 = group.iter().map(|&b| norm(bone(gt, topo, t, b))).sum();
            let len_pred: f64 = group.iter().map(|&b| norm(bone(pred, topo, t, b))).sum();
            value += (len_pred - len_gt).abs();
            if let Some(g) = grad.as_deref_mut() {
                let s = sign(len_pred - len_gt);
                if s == 0.0 {
                    continue;
                }
                for &b in group {
                    let v = bone(pred, topo, t, b);
                    let n = norm(v);
                    if n > 0.0 {
                        scatter_bone(g, topo, t, b, [s * v[0] / n, s * v[1] / n, s * v[2] / n]);
                    }
                }
            }
        }
    }
    TermOut {
        value,
        degenerate: 0,
    }
}

fn angle_term(
    gt: &ArrayView3<f64>,
    pred: &ArrayView3<f64>,
    topo: &HandTopology,
    mut grad: Option<&mut Array3<f64>>,
) -> TermOut {
    let mut out = TermOut::default();
    for t in 0..gt.dim().0 {
        for &(i, j) in topo.consecutive_pairs() {
            let reference = angle_with_grad(bone(gt, topo, t, i), bone(gt, topo, t, j));
            let predicted = angle_with_grad(bone(pred, topo, t, i), bone(pred, topo, t, j));
            let (Some((theta_gt, _, _)), Some((theta_pred, gi, gj))) = (reference, predicted) else {
                out.degenerate += 1;
                continue;
            };
            out.value += (theta_pred - theta_gt).abs();
            if let Some(g) = grad.as_deref_mut() {
                let s = sign(theta_pred - theta_gt);
                scatter_bone(g, topo, t, i, gi.map(|v| s * v));
                scatter_bone(g, topo, t, j, gj.map(|v| s * v));
            }
        }
    }
    out
}

fn direction_term(
    gt: &ArrayView3<f64>,
    pred: &ArrayView3<f64>,
    topo: &HandTopology,
    mut grad: Option<&mut Array3<f64>>,
) -> TermOut {
    let mut out = TermOut::default();
    for t in 0..gt.dim().0 {
        for b in 0..topo.num_bones() {
            let Some((theta, _, g_pred)) = angle_with_grad(bone(gt, topo, t, b), bone(pred, topo, t, b))
            else {
                out.degenerate += 1;
                continue;
            };
            out.value += theta;
            if let Some(g) = grad.as_deref_mut() {
                scatter_bone(g, topo, t, b, g_pred);
            }
        }
    }
    out
}

/// `sum_t sum_i |x_ti - x̂_ti|`.
pub fn pose_loss(gt: ArrayView3<f64>, pred: ArrayView3<f64>) -> Result<f64> {
    check_pair(&gt, &pred, None)?;
    Ok(pose_term(&gt, &pred, None).value)
}

/// `sum_t sum_fingers |p_ti - p̂_ti|` with `p` the chain length (or per-bone length).
pub fn finger_length_loss(
    gt: ArrayView3<f64>,
    pred: ArrayView3<f64>,
    topo: &HandTopology,
    mode: FingerLengthMode,
) -> Result<f64> {
    check_pair(&gt, &pred, Some(topo.num_joints()))?;
    Ok(finger_term(&gt, &pred, topo, mode, None).value)
}

/// Absolute inter-bone angle differences over consecutive bone pairs.
pub fn angle_loss(gt: ArrayView3<f64>, pred: ArrayView3<f64>, topo: &HandTopology) -> Result<f64> {
    check_pair(&gt, &pred, Some(topo.num_joints()))?;
    Ok(angle_term(&gt, &pred, topo, None).value)
}

/// Angles between every ground-truth bone and its predicted counterpart.
pub fn direction_loss(
    gt: ArrayView3<f64>,
    pred: ArrayView3<f64>,
    topo: &HandTopology,
) -> Result<f64> {
    check_pair(&gt, &pred, Some(topo.num_joints()))?;
    Ok(direction_term(&gt, &pred, topo, None).value)
}

/// One term and its gradient with respect to `pred`.
pub fn term_with_grad(
    term: LossTerm,
    gt: ArrayView3<f64>,
    pred: ArrayView3<f64>,
    topo: &HandTopology,
    mode: FingerLengthMode,
) -> Result<(f64, Array3<f64>)> {
    check_pair(&gt, &pred, Some(topo.num_joints()))?;
    let mut grad = Array3::zeros(pred.raw_dim());
    let out = match term {
        LossTerm::Pose => pose_term(&gt, &pred, Some(&mut grad)),
        LossTerm::FingerLength => finger_term(&gt, &pred, topo, mode, Some(&mut grad)),
        LossTerm::Angle => angle_term(&gt, &pred, topo, Some(&mut grad)),
        LossTerm::Direction => direction_term(&gt, &pred, topo, Some(&mut grad)),
    };
    Ok((out.value, grad))
}

fn combine(
    gt: ArrayView3<f64>,
    pred: ArrayView3<f64>,
    topo: &HandTopology,
    cfg: &LossConfig,
    mut grad: Option<&mut Array3<f64>>,
) -> Result<LossReport> {
    check_pair(&gt, &pred, Some(topo.num_joints()))?;
    cfg.weights.validate()?;
    let w = cfg.weights;
    let mut report = LossReport::default();
    let mut scratch = grad.as_ref().map(|g| Array3::zeros(g.raw_dim()));
    for (term, weight) in LossTerm::ALL.into_iter().zip(w.as_array()) {
        if let Some(s) = scratch.as_mut() {
            s.fill(0.0);
        }
        let out = match term {
            LossTerm::Pose => pose_term(&gt, &pred, scratch.as_mut()),
            LossTerm::FingerLength => finger_term(&gt, &pred, topo, cfg.finger_length, scratch.as_mut()),
            LossTerm::Angle => angle_term(&gt, &pred, topo, scratch.as_mut()),
            LossTerm::Direction => direction_term(&gt, &pred, topo, scratch.as_mut()),
        };
        match term {
            LossTerm::Pose => report.pose = out.value,
            LossTerm::FingerLength => report.finger = out.value,
            LossTerm::Angle => report.angle = out.value,
            LossTerm::Direction => report.direction = out.value,
        }
        report.degenerate += out.degenerate;
        if let (Some(g), Some(s)) = (grad.as_deref_mut(), scratch.as_ref()) {
            g.scaled_add(weight, s);
        }
    }
    report.total = w.pose * report.pose
        + w.finger * report.finger
        + w.angle * report.angle
        + w.direction * report.direction;
    Ok(report)
}

/// All four terms and their weighted sum.
pub fn total_loss(
    gt: ArrayView3<f64>,
    pred: ArrayView3<f64>,
    topo: &HandTopology,
    cfg: &LossConfig,
) -> Result<LossReport> {
    combine(gt, pred, topo, cfg, None)
}

/// [`total_loss`] plus the gradient of the weighted total with respect to `pred`.
pub fn total_loss_with_grad(
    gt: ArrayView3<f64>,
    pred: ArrayView3<f64>,
    topo: &HandTopology,
    cfg: &LossConfig,
) -> Result<(LossReport, Array3<f64>)> {
    let mut grad = Array3::zeros(pred.raw_dim());
    let report = combine(gt, pred, topo, cfg, Some(&mut grad))?;
    Ok((report, grad))
}
