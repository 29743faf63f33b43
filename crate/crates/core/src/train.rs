//! Mini-batch training with Adam and the two-level learning-rate decay.

use std::fmt::Write as _;

use ndarray::{Array2, Array3, ArrayView3, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::losses::{total_loss_with_grad, FingerLengthMode, LossConfig, LossTerm, LossWeights};
use crate::nn::{Adam, AdamConfig, LocalToGlobalNet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub initial_lr: f64,
    /// Multiplier applied once per epoch.
    pub epoch_decay: f64,
    /// Multiplier applied once every `step_every` epochs.
    pub step_decay: f64,
    pub step_every: usize,
    pub window: usize,
    pub weights: LossWeights,
    pub finger_length: FingerLengthMode,
    pub seed: u64,
    /// Global gradient-norm ceiling; absent disables clipping.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip_norm: Option<f64>,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 256,
            initial_lr: 1e-3,
            epoch_decay: 0.95,
            step_decay: 0.5,
            step_every: 10,
            window: 3,
            weights: LossWeights::default(),
            finger_length: FingerLengthMode::Chain,
            seed: 0,
            clip_norm: None,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if self.batch_size == 0 || self.step_every == 0 {
            return Err(Error::Config("batch_size and step_every must be positive".into()));
        }
        if self.window == 0 || self.window % 2 == 0 {
            return Err(Error::Config(format!("window must be odd, got {}", self.window)));
        }
        if !positive(self.initial_lr) || !positive(self.epoch_decay) || !positive(self.step_decay) {
            return Err(Error::Config("learning rate and decay factors must be positive".into()));
        }
        if self.clip_norm.is_some_and(|c| !positive(c)) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        let a = self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !positive(a.epsilon) {
            return Err(Error::Config("invalid Adam hyperparameters".into()));
        }
        self.weights.validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            weights: self.weights,
            finger_length: self.finger_length,
        }
    }
}

/// `initial_lr * epoch_decay^(epoch-1) * step_decay^floor((epoch-1)/step_every)` for 1-based `epoch`.
pub fn learning_rate_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    let e = epoch.max(1) - 1;
    cfg.initial_lr * cfg.epoch_decay.powi(e as i32) * cfg.step_decay.powi((e / cfg.step_every) as i32)
}

/// Epoch means of each loss term (per sample) and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub pose: f64,
    pub finger: f64,
    pub angle: f64,
    pub direction: f64,
    pub total: f64,
}

pub const LOG_HEADER: &str = "epoch\tlr\tL_p\tL_f\tL_a\tL_d\ttotal";

impl EpochLog {
    pub fn to_tsv_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.epoch, self.lr, self.pose, self.finger, self.angle, self.direction, self.total
        )
    }

    pub fn parse_tsv_line(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split('\t').collect();
        let bad = || Error::validation(format!("malformed log line `{line}`"));
        if f.len() != 7 {
            return Err(bad());
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
        Ok(Self {
            epoch: f[0].parse().map_err(|_| bad())?,
            lr: num(1)?,
            pose: num(2)?,
            finger: num(3)?,
            angle: num(4)?,
            direction: num(5)?,
            total: num(6)?,
        })
    }
}

pub fn format_log(entries: &[EpochLog]) -> String {
    let mut out = String::from(LOG_HEADER);
    out.push('\n');
    for e in entries {
        writeln!(out, "{}", e.to_tsv_line()).unwrap();
    }
    out
}

/// Stacks the `(21, 3)` targets of `samples` into `(B, 21, 3)`.
pub fn stack_targets(samples: &[&WindowSample]) -> Array3<f64> {
    let views: Vec<_> = samples.iter().map(|s| s.target.view()).collect();
    ndarray::stack(Axis(0), &views).expect("targets share a shape")
}

fn to_frames(pred: &Array2<f64>, batch: usize) -> Array3<f64> {
    let joints = pred.nrows() / batch;
    pred.clone()
        .into_shape_with_order((batch, joints, 3))
        .expect("prediction rows are batch-major")
}

/// A model plus optimizer state that advances one epoch at a time.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub net: LocalToGlobalNet,
    pub optimizer: Adam,
    pub config: TrainConfig,
    pub epochs_completed: usize,
}

impl Trainer {
    pub fn new(net: LocalToGlobalNet, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if net.config().window != config.window {
            return Err(Error::Config(format!(
                "model window {} differs from training window {}",
                net.config().window,
                config.window
            )));
        }
        let optimizer = Adam::new(config.adam, net.params());
        Ok(Self {
            net,
            optimizer,
            config,
            epochs_completed: 0,
        })
    }

    /// Continues from a restored model and optimizer after `epochs_completed` epochs.
    pub fn resume(
        net: LocalToGlobalNet,
        optimizer: Adam,
        config: TrainConfig,
        epochs_completed: usize,
    ) -> Result<Self> {
        optimizer.check_compatible(net.params())?;
        let mut t = Self::new(net, config)?;
        t.optimizer = optimizer;
        t.epochs_completed = epochs_completed;
        Ok(t)
    }

    /// One shuffled pass over `samples`.
    pub fn run_epoch(&mut self, samples: &[WindowSample]) -> Result<EpochLog> {
        if samples.is_empty() {
            return Err(Error::validation("training set is empty"));
        }
        let epoch = self.epochs_completed + 1;
        let lr = learning_rate_at(epoch, &self.config);
        let loss_cfg = self.config.loss_config();
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(
            self.config.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        );
        order.shuffle(&mut rng);

        let mut sums = [0.0; 4];
        for (batch_idx, chunk) in order.chunks(self.config.batch_size).enumerate() {
            let batch: Vec<&WindowSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let views: Vec<ArrayView3<f64>> = batch.iter().map(|s| s.input.view()).collect();
            let x = self.net.pack_inputs(&views)?;
            let (out, cache) = self.net.forward(&x)?;
            let b = batch.len();
            let gt = stack_targets(&batch);
            let pred = to_frames(&out, b);
            let (report, grad) =
                total_loss_with_grad(gt.view(), pred.view(), self.net.topology(), &loss_cfg)?;
            for term in LossTerm::ALL {
                if !report.term(term).is_finite() {
                    return Err(Error::NonFiniteLoss {
                        term: term.name(),
                        epoch,
                        batch: batch_idx,
                    });
                }
            }
            for (s, term) in sums.iter_mut().zip(LossTerm::ALL) {
                *s += report.term(term);
            }
            let d_out = grad
                .into_shape_with_order((out.nrows(), 3))
                .expect("gradient matches prediction")
                / b as f64;
            let mut grads = self.net.params().zeros_like();
            self.net.backward(&cache, &d_out, &mut grads);
            let norm = grads.global_norm();
            if !norm.is_finite() {
                return Err(Error::NonFiniteLoss {
                    term: "gradient",
                    epoch,
                    batch: batch_idx,
                });
            }
            if let Some(c) = self.config.clip_norm {
                if norm > c {
                    grads.scale(c / norm);
                }
            }
            self.optimizer.update(self.net.params_mut(), &grads, lr);
        }
        let n = samples.len() as f64;
        let [pose, finger, angle, direction] = sums.map(|s| s / n);
        let w = self.config.weights;
        let total = w.pose * pose + w.finger * finger + w.angle * angle + w.direction * direction;
        self.epochs_completed = epoch;
        Ok(EpochLog {
            epoch,
            lr,
            pose,
            finger,
            angle,
            direction,
            total,
        })
    }

    /// Runs `config.epochs` epochs, calling `on_epoch` after each.
    pub fn train(
        &mut self,
        samples: &[WindowSample],
        mut on_epoch: impl FnMut(&EpochLog, &Trainer) -> Result<()>,
    ) -> Result<Vec<EpochLog>> {
        if samples.is_empty() && self.config.epochs > 0 {
            return Err(Error::validation("training set is empty"));
        }
        let mut log = Vec::with_capacity(self.config.epochs);
        for _ in 0..self.config.epochs {
            let entry = self.run_epoch(samples)?;
            on_epoch(&entry, self)?;
            log.push(entry);
        }
        Ok(log)
    }
}

/// Trains `net` for `cfg.epochs` epochs on `samples` and returns the per-epoch log.
pub fn train(
    net: LocalToGlobalNet,
    samples: &[WindowSample],
    cfg: &TrainConfig,
) -> Result<(LocalToGlobalNet, Vec<EpochLog>)> {
    let mut trainer = Trainer::new(net, cfg.clone())?;
    let log = trainer.train(samples, |_, _| Ok(()))?;
    Ok((trainer.net, log))
}
