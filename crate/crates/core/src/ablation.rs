//! Loss-weight and window-length ablation grids.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::{build_windows, CameraModel, SkeletonSequence};
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::metrics::{evaluate, mpjpe, PosePredictor};
use crate::nn::LocalToGlobalNet;
use crate::topology::HandTopology;
use crate::train::{stack_targets, EpochLog, Trainer};

/// Overrides applied to the base configuration for one ablation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationEntry {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<LossWeights>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationGrid {
    #[serde(default)]
    pub runs: Vec<AblationEntry>,
}

impl AblationGrid {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Pose loss alone, then finger length, angle and direction added in turn.
    pub fn loss_weights() -> Self {
        let rows = [
            (1.0, 0.0, 0.0, 0.0),
            (1.0, 0.1, 0.0, 0.0),
            (1.0, 0.1, 0.1, 0.0),
            (1.0, 0.1, 0.1, 0.1),
            (1.0, 0.1, 0.1, 0.01),
        ];
        Self {
            runs: rows
                .iter()
                .map(|&(p, f, a, d)| AblationEntry {
                    label: format!("weights_{p}_{f}_{a}_{d}"),
                    weights: Some(LossWeights::new(p, f, a, d)),
                    window: None,
                })
                .collect(),
        }
    }

    /// Window lengths 3 to 13.
    pub fn window_lengths() -> Self {
        Self {
            runs: [3, 5, 7, 9, 11, 13]
                .iter()
                .map(|&t| AblationEntry {
                    label: format!("frames_{t}"),
                    weights: None,
                    window: Some(t),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub weights: LossWeights,
    pub window: usize,
    /// Evaluation MPJPE (mm).
    pub mpjpe: f64,
    /// Training-set MPJPE (mm).
    pub train_mpjpe: f64,
    pub final_epoch: Option<EpochLog>,
}

pub const TABLE_HEADER: &str =
    "label\tlambda_p\tlambda_f\tlambda_a\tlambda_d\twindow\tmpjpe_mm\ttrain_mpjpe_mm\tfinal_L_p\tfinal_total";

pub fn format_table(rows: &[AblationRow]) -> String {
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    for r in rows {
        let w = r.weights;
        let (lp, total) = r
            .final_epoch
            .map(|e| (e.pose.to_string(), e.total.to_string()))
            .unwrap_or_else(|| ("nan".into(), "nan".into()));
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.label, w.pose, w.finger, w.angle, w.direction, r.window, r.mpjpe, r.train_mpjpe, lp, total
        )
        .unwrap();
    }
    out
}

/// Applies `entry` to a copy of `base`.
pub fn resolve(base: &RunConfig, entry: &AblationEntry) -> Result<RunConfig> {
    let mut cfg = base.clone();
    if let Some(w) = entry.weights {
        cfg.train.weights = w;
    }
    if let Some(t) = entry.window {
        cfg.set_window(t);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Trains and evaluates every grid entry with the base seed. An empty `eval`
/// set evaluates on the training sequences.
pub fn ablation_run(
    base: &RunConfig,
    grid: &AblationGrid,
    train: &[SkeletonSequence],
    eval: &[SkeletonSequence],
    camera: &CameraModel,
    topology: &HandTopology,
    mut on_row: impl FnMut(&AblationRow),
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(grid.runs.len());
    for entry in &grid.runs {
        let cfg = resolve(base, entry)?;
        let t = cfg.train.window;
        let seed = cfg.train.seed;
        let train_samples = build_windows(train, camera, t, cfg.data.noise_std, seed)?;
        let eval_samples = if eval.is_empty() {
            train_samples.clone()
        } else {
            build_windows(eval, camera, t, cfg.data.noise_std, seed.wrapping_add(1 << 32))?
        };
        if train_samples.is_empty() || eval_samples.is_empty() {
            return Err(Error::validation(format!(
                "{}: no windows of length {t} in the data",
                entry.label
            )));
        }
        let net = LocalToGlobalNet::new(cfg.net.clone(), topology.clone(), seed)?;
        let mut trainer = Trainer::new(net, cfg.train.clone())?;
        let log = trainer.train(&train_samples, |_, _| Ok(()))?;
        let report = evaluate(&trainer.net, &eval_samples, topology, &[])?;
        let train_preds = trainer.net.predict_samples(&train_samples)?;
        let refs: Vec<_> = train_samples.iter().collect();
        let gt = stack_targets(&refs);
        let pred = ndarray::stack(
            ndarray::Axis(0),
            &train_preds.iter().map(|p| p.view()).collect::<Vec<_>>(),
        )
        .expect("predictions share a shape");
        let row = AblationRow {
            label: entry.label.clone(),
            weights: cfg.train.weights,
            window: t,
            mpjpe: report.overall,
            train_mpjpe: mpjpe(gt.view(), pred.view())?,
            final_epoch: log.last().copied(),
        };
        on_row(&row);
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_grids_have_table_shapes() {
        let w = AblationGrid::loss_weights();
        assert_eq!(w.runs.len(), 5);
        assert_eq!(w.runs[0].weights, Some(LossWeights::new(1.0, 0.0, 0.0, 0.0)));
        assert_eq!(w.runs[4].weights, Some(LossWeights::new(1.0, 0.1, 0.1, 0.01)));
        let t: Vec<_> = AblationGrid::window_lengths().runs.iter().map(|r| r.window.unwrap()).collect();
        assert_eq!(t, vec![3, 5, 7, 9, 11, 13]);
    }

    #[test]
    fn grid_toml_round_trip() {
        let g = AblationGrid::loss_weights();
        let back: AblationGrid = toml::from_str(&g.to_toml().unwrap()).unwrap();
        assert_eq!(back, g);
        let empty: AblationGrid = toml::from_str("").unwrap();
        assert!(empty.runs.is_empty());
    }

    #[test]
    fn empty_grid_gives_empty_table() {
        let rows = ablation_run(
            &RunConfig::default(),
            &AblationGrid::default(),
            &[],
            &[],
            &crate::data::synth::synthetic_camera(),
            &HandTopology::canonical(),
            |_| {},
        )
        .unwrap();
        assert!(rows.is_empty());
        assert_eq!(format_table(&rows).lines().count(), 1);
    }
}
