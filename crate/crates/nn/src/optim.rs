use serde::{Deserialize, Serialize};
use xprojct_core::Scalar;

use crate::error::{NnError, Result};
use crate::layer::LayerParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

/// Adam with decoupled weight decay. Moments are kept in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub cfg: AdamWConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new<S: Scalar>(cfg: AdamWConfig, params: &[LayerParams<S>]) -> Self {
        let sizes: Vec<usize> = params.iter().map(LayerParams::len).collect();
        AdamW {
            cfg,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update: bias-corrected moment step, then `p -= lr * wd * p`.
    pub fn step<S: Scalar>(&mut self, params: &mut [LayerParams<S>], grads: &[LayerParams<S>], lr: f64) -> Result<()> {
        let finite = grads
            .iter()
            .all(|g| g.weight.iter().chain(&g.bias).all(|v| v.is_finite()));
        if !finite {
            return Err(NnError::Diverged {
                epoch: 0,
                reason: "non-finite gradient".into(),
            });
        }
        self.step += 1;
        let AdamWConfig { beta1, beta2, eps, weight_decay } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (l, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[l], &mut self.v[l]);
            let values = p.weight.iter_mut().chain(p.bias.iter_mut());
            let gs = g.weight.iter().chain(&g.bias);
            for (i, (pv, gv)) in values.zip(gs).enumerate() {
                let gv = gv.as_f64();
                m[i] = beta1 * m[i] + (1.0 - beta1) * gv;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gv * gv;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                let mut x = pv.as_f64() - lr * m_hat / (v_hat.sqrt() + eps);
                x -= lr * weight_decay * x;
                *pv = S::of(x);
            }
        }
        Ok(())
    }
}

/// Multiplies the learning rate by `factor` once `patience` consecutive
/// epochs pass without improvement, then starts counting again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub patience: usize,
    pub factor: f64,
    pub min_lr: f64,
    pub threshold: f64,
    best: f64,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(patience: usize, factor: f64, min_lr: f64, threshold: f64) -> Self {
        PlateauScheduler {
            patience,
            factor,
            min_lr,
            threshold,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Feeds one validation loss; returns the new rate if it changed.
    pub fn observe(&mut self, val_loss: f64, lr: &mut f64) -> Option<f64> {
        if val_loss < self.best - self.threshold {
            self.best = val_loss;
            self.bad_epochs = 0;
            return None;
        }
        self.bad_epochs += 1;
        if self.bad_epochs < self.patience {
            return None;
        }
        self.bad_epochs = 0;
        let next = (*lr * self.factor).max(self.min_lr);
        if next < *lr {
            *lr = next;
            Some(next)
        } else {
            None
        }
    }
}

/// Tracks the best validation loss and signals a stop after `patience`
/// epochs without improvement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
    pub threshold: f64,
    best: f64,
    best_epoch: Option<usize>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, threshold: f64) -> Self {
        EarlyStopping {
            patience,
            threshold,
            best: f64::INFINITY,
            best_epoch: None,
            stale: 0,
        }
    }

    /// Returns whether this epoch improved on the best loss.
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> bool {
        if val_loss < self.best - self.threshold {
            self.best = val_loss;
            self.best_epoch = Some(epoch);
            self.stale = 0;
            true
        } else {
            self.stale += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.stale >= self.patience
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best_epoch.map(|e| (e, self.best))
    }
}
