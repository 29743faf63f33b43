use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::params::{Grads, ParamSet};
use crate::error::{Error, Result};

/// Adam hyperparameters other than the learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adaptive-moment optimizer with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamSet) -> Self {
        let zeros: Vec<Vec<f64>> = params.values().iter().map(|v| vec![0.0; v.len()]).collect();
        Self {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    /// Checks that restored moment buffers fit `params`.
    pub fn check_compatible(&self, params: &ParamSet) -> Result<()> {
        let fits = |bufs: &[Vec<f64>]| {
            bufs.len() == params.len()
                && bufs.iter().zip(params.values()).all(|(b, v)| b.len() == v.len())
        };
        if fits(&self.first) && fits(&self.second) {
            Ok(())
        } else {
            Err(Error::Checkpoint("optimizer state does not match the model".into()))
        }
    }

    pub fn update(&mut self, params: &mut ParamSet, grads: &Grads, lr: f64) {
        self.step += 1;
        let AdamConfig {
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (i, (p, g)) in params.values_mut().iter_mut().zip(&grads.values).enumerate() {
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            let mut k = 0;
            Zip::from(p).and(g).for_each(|p, &g| {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g;
                v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
                *p -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + epsilon);
                k += 1;
            });
        }
    }
}
