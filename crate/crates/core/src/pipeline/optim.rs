//! First-order optimizers over a [`ParamSet`].

use serde::{Deserialize, Serialize};

use crate::params::ParamSet;
use crate::pipeline::config::{Algorithm, OptimizerConfig};
use crate::tensor::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    pub cfg: OptimizerConfig,
    pub step: u64,
    /// Adagrad accumulator or Adam first moment, per parameter.
    pub first: Vec<Matrix>,
    /// Adam second moment; empty for Adagrad.
    pub second: Vec<Matrix>,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig, params: &ParamSet) -> Optimizer {
        let zeros = || params.iter().map(|(_, m)| Matrix::zeros(m.rows, m.cols)).collect::<Vec<_>>();
        let second = if cfg.algorithm == Algorithm::Adam { zeros() } else { Vec::new() };
        Optimizer { cfg, step: 0, first: zeros(), second }
    }

    /// Applies one update. Missing gradients leave their parameter untouched.
    pub fn apply(&mut self, params: &mut ParamSet, grads: &mut [Option<Matrix>]) -> Result<f64> {
        if grads.len() != params.len() || self.first.len() != params.len() {
            return Err(Error::Dimension(format!("{} gradients for {} parameters", grads.len(), params.len())));
        }
        let norm = grads.iter().flatten().map(|g| g.data.iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::Divergence { stage: format!("optimizer step {}", self.step), detail: "non-finite gradient".into() });
        }
        if self.cfg.clip_norm > 0.0 && norm > self.cfg.clip_norm {
            let k = self.cfg.clip_norm / norm;
            for g in grads.iter_mut().flatten() {
                g.scale(k);
            }
        }
        self.step += 1;
        let lr = self.cfg.lr;
        let eps = self.cfg.eps;
        match self.cfg.algorithm {
            Algorithm::Adagrad => {
                for (i, g) in grads.iter().enumerate() {
                    let Some(g) = g else { continue };
                    let acc = &mut self.first[i];
                    let p = params.get_mut(i);
                    for k in 0..g.data.len() {
                        acc.data[k] += g.data[k] * g.data[k];
                        p.data[k] -= lr * g.data[k] / (acc.data[k].sqrt() + eps);
                    }
                }
            }
            Algorithm::Adam => {
                let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
                let c1 = 1.0 - b1.powi(self.step as i32);
                let c2 = 1.0 - b2.powi(self.step as i32);
                for (i, g) in grads.iter().enumerate() {
                    let Some(g) = g else { continue };
                    let p = params.get_mut(i);
                    let (m, v) = (&mut self.first[i], &mut self.second[i]);
                    for k in 0..g.data.len() {
                        m.data[k] = b1 * m.data[k] + (1.0 - b1) * g.data[k];
                        v.data[k] = b2 * v.data[k] + (1.0 - b2) * g.data[k] * g.data[k];
                        p.data[k] -= lr * (m.data[k] / c1) / ((v.data[k] / c2).sqrt() + eps);
                    }
                }
            }
        }
        if !params.is_finite() {
            return Err(Error::Divergence { stage: format!("optimizer step {}", self.step), detail: "non-finite parameter".into() });
        }
        Ok(norm)
    }
}
