//! MPJPE variants, PCK curves and the evaluation report.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::nn::LocalToGlobalNet;
use crate::topology::{Finger, HandTopology, JointKind};

fn check_shapes(gt: &ArrayView3<f64>, pred: &ArrayView3<f64>) -> Result<()> {
    if gt.dim() != pred.dim() || gt.len_of(Axis(2)) != 3 {
        return Err(Error::validation(format!(
            "pose shapes differ or are not (K, J, 3): {:?} vs {:?}",
            gt.dim(),
            pred.dim()
        )));
    }
    Ok(())
}

fn joint_distances(gt: &ArrayView3<f64>, pred: &ArrayView3<f64>) -> Array2<f64> {
    let (k, j, _) = gt.dim();
    Array2::from_shape_fn((k, j), |(s, i)| {
        (0..3)
            .map(|d| (gt[[s, i, d]] - pred[[s, i, d]]).powi(2))
            .sum::<f64>()
            .sqrt()
    })
}

/// Mean Euclidean joint error over all `K * J` joints of `(K, J, 3)` poses.
pub fn mpjpe(gt: ArrayView3<f64>, pred: ArrayView3<f64>) -> Result<f64> {
    check_shapes(&gt, &pred)?;
    if gt.is_empty() {
        return Err(Error::validation("mpjpe of an empty set"));
    }
    Ok(joint_distances(&gt, &pred).mean().expect("nonempty"))
}

/// MPJPE of each sample.
pub fn per_sample_mpjpe(gt: ArrayView3<f64>, pred: ArrayView3<f64>) -> Result<Vec<f64>> {
    check_shapes(&gt, &pred)?;
    Ok(joint_distances(&gt, &pred)
        .rows()
        .into_iter()
        .map(|r| r.mean().unwrap_or(0.0))
        .collect())
}

/// Fraction of samples whose MPJPE is strictly below each threshold (ascending, mm).
pub fn pck_curve(gt: ArrayView3<f64>, pred: ArrayView3<f64>, thresholds: &[f64]) -> Result<Vec<f64>> {
    if thresholds.windows(2).any(|w| !(w[0] <= w[1])) || thresholds.iter().any(|t| t.is_nan()) {
        return Err(Error::validation("PCK thresholds must be sorted ascending"));
    }
    let errors = per_sample_mpjpe(gt, pred)?;
    if errors.is_empty() {
        return Err(Error::validation("PCK of an empty set"));
    }
    let n = errors.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| errors.iter().filter(|&&e| e < t).count() as f64 / n)
        .collect())
}

/// Default PCK thresholds: 0 to 80 mm in 5 mm steps.
pub fn default_thresholds() -> Vec<f64> {
    (0..=16).map(|i| 5.0 * i as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupError {
    pub mpjpe: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedError {
    pub name: String,
    pub mpjpe: f64,
    /// Joints per frame in the group.
    pub joints: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PckSample {
    pub threshold: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: usize,
    pub overall: f64,
    pub per_action: BTreeMap<String, GroupError>,
    /// Wrist, MCP, PIP, DIP, TIP.
    pub per_joint_type: Vec<NamedError>,
    /// Thumb to pinky; the wrist belongs to no finger.
    pub per_finger: Vec<NamedError>,
    pub pck: Vec<PckSample>,
}

impl MetricsReport {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Sample-weighted mean of the per-action values.
    pub fn action_weighted_mean(&self) -> f64 {
        let (sum, n) = self
            .per_action
            .values()
            .fold((0.0, 0usize), |(s, n), g| (s + g.mpjpe * g.samples as f64, n + g.samples));
        sum / n as f64
    }
}

/// Anything that maps window samples to `(21, 3)` root-relative predictions.
pub trait PosePredictor {
    fn predict_samples(&self, samples: &[WindowSample]) -> Result<Vec<Array2<f64>>>;
}

impl PosePredictor for LocalToGlobalNet {
    fn predict_samples(&self, samples: &[WindowSample]) -> Result<Vec<Array2<f64>>> {
        let views: Vec<_> = samples.iter().map(|s| s.input.view()).collect();
        self.predict_many(&views)
    }
}

/// Returns each sample's own target.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleModel;

impl PosePredictor for OracleModel {
    fn predict_samples(&self, samples: &[WindowSample]) -> Result<Vec<Array2<f64>>> {
        Ok(samples.iter().map(|s| s.target.clone()).collect())
    }
}

/// Full report over `samples` using `thresholds` (ascending, mm) for PCK.
pub fn evaluate<P: PosePredictor + ?Sized>(
    model: &P,
    samples: &[WindowSample],
    topo: &HandTopology,
    thresholds: &[f64],
) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::validation("evaluation set is empty"));
    }
    let preds = model.predict_samples(samples)?;
    if preds.len() != samples.len() {
        return Err(Error::validation("predictor returned the wrong number of poses"));
    }
    let gt = ndarray::stack(
        Axis(0),
        &samples.iter().map(|s| s.target.view()).collect::<Vec<_>>(),
    )
    .map_err(|e| Error::validation(e.to_string()))?;
    let pred = ndarray::stack(Axis(0), &preds.iter().map(|p| p.view()).collect::<Vec<_>>())
        .map_err(|e| Error::validation(e.to_string()))?;
    let dist = {
        check_shapes(&gt.view(), &pred.view())?;
        joint_distances(&gt.view(), &pred.view())
    };
    let overall = dist.mean().expect("nonempty");

    let mut per_action: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (row, s) in dist.rows().into_iter().zip(samples) {
        let e = per_action.entry(s.meta.action.clone()).or_default();
        e.0 += row.mean().expect("joints");
        e.1 += 1;
    }
    let per_action = per_action
        .into_iter()
        .map(|(k, (sum, n))| {
            (
                k,
                GroupError {
                    mpjpe: sum / n as f64,
                    samples: n,
                },
            )
        })
        .collect();

    let group_mean = |joints: &[usize]| -> f64 {
        let total: f64 = joints.iter().map(|&j| dist.column(j).sum()).sum();
        total / (joints.len() * dist.nrows()) as f64
    };
    let per_joint_type = JointKind::ALL
        .iter()
        .map(|&kind| {
            let joints: Vec<usize> =
                (0..topo.num_joints()).filter(|&j| topo.joint_kind(j) == kind).collect();
            NamedError {
                name: kind.name().to_string(),
                mpjpe: group_mean(&joints),
                joints: joints.len(),
            }
        })
        .collect();
    let per_finger = Finger::ALL
        .iter()
        .map(|&finger| {
            let joints: Vec<usize> = (0..topo.num_joints())
                .filter(|&j| topo.joint_finger(j) == Some(finger))
                .collect();
            NamedError {
                name: finger.name().to_string(),
                mpjpe: group_mean(&joints),
                joints: joints.len(),
            }
        })
        .collect();
    let pck = pck_curve(gt.view(), pred.view(), thresholds)?
        .into_iter()
        .zip(thresholds)
        .map(|(fraction, &threshold)| PckSample {
            threshold,
            fraction,
        })
        .collect();
    Ok(MetricsReport {
        samples: samples.len(),
        overall,
        per_action,
        per_joint_type,
        per_finger,
        pck,
    })
}
