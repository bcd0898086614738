//! Training-recipe building blocks: AdamW with decoupled weight decay,
//! cosine annealing with warm restarts stepped per epoch, validation-loss
//! early stopping, and mean-emitting gradient accumulation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("bad optimizer config: {0}")]
    BadConfig(String),
}

/// AdamW hyperparameters. Defaults follow the training recipe:
/// lr 1e-4, weight decay 1e-5.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-4,
            weight_decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// AdamW state over one flat parameter vector. Weight decay is decoupled:
/// applied directly to the parameters, never folded into the gradient.
#[derive(Debug, Clone)]
pub struct AdamW {
    cfg: AdamWConfig,
    step_count: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig, param_count: usize) -> Self {
        AdamW {
            cfg,
            step_count: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    /// One update with an explicit learning rate (the scheduler's output).
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<(), OptimError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(OptimError::LengthMismatch {
                expected: self.m.len(),
                got: if params.len() != self.m.len() {
                    params.len()
                } else {
                    grads.len()
                },
            });
        }
        if lr < 0.0 {
            return Err(OptimError::BadConfig(format!("negative lr {lr}")));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bias1 = 1.0 - self.cfg.beta1.powi(t);
        let bias2 = 1.0 - self.cfg.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.cfg.beta1 * self.m[i] + (1.0 - self.cfg.beta1) * g;
            self.v[i] = self.cfg.beta2 * self.v[i] + (1.0 - self.cfg.beta2) * g * g;
            let m_hat = self.m[i] / bias1;
            let v_hat = self.v[i] / bias2;
            params[i] -=
                lr * (m_hat / (v_hat.sqrt() + self.cfg.eps) + self.cfg.weight_decay * params[i]);
        }
        Ok(())
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }
}

/// Cosine-annealing schedule parameters, in epoch units. `t0` is the
/// initial cycle length; `cycle_mult` stretches each subsequent cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CosineConfig {
    pub t0: usize,
    pub eta_min: f64,
    pub cycle_mult: usize,
}

impl Default for CosineConfig {
    fn default() -> Self {
        CosineConfig {
            t0: 3,
            eta_min: 0.0,
            cycle_mult: 1,
        }
    }
}

/// Cosine annealing with warm restarts. `lr()` reads the current value;
/// `advance_epoch()` moves the clock and restarts when the cycle ends.
#[derive(Debug, Clone)]
pub struct CosineSchedule {
    eta_max: f64,
    eta_min: f64,
    t_cur: usize,
    t_i: usize,
    cycle_mult: usize,
}

impl CosineSchedule {
    pub fn new(cfg: CosineConfig, eta_max: f64) -> Result<Self, OptimError> {
        if cfg.t0 == 0 {
            return Err(OptimError::BadConfig("t0 must be at least 1".to_string()));
        }
        if cfg.cycle_mult == 0 {
            return Err(OptimError::BadConfig(
                "cycle_mult must be at least 1".to_string(),
            ));
        }
        if cfg.eta_min > eta_max {
            return Err(OptimError::BadConfig(format!(
                "eta_min {} exceeds eta_max {}",
                cfg.eta_min, eta_max
            )));
        }
        Ok(CosineSchedule {
            eta_max,
            eta_min: cfg.eta_min,
            t_cur: 0,
            t_i: cfg.t0,
            cycle_mult: cfg.cycle_mult,
        })
    }

    /// eta_min + (eta_max - eta_min) * (1 + cos(pi * t_cur / t_i)) / 2
    pub fn lr(&self) -> f64 {
        self.lr_at(self.t_cur)
    }

    /// The schedule value at an arbitrary clock position within the
    /// current cycle (the running schedule restarts before ever reaching
    /// `t_i`, but the formula is defined there).
    pub fn lr_at(&self, t_cur: usize) -> f64 {
        let cosine = (std::f64::consts::PI * t_cur as f64 / self.t_i as f64).cos();
        self.eta_min + 0.5 * (self.eta_max - self.eta_min) * (1.0 + cosine)
    }

    /// Advances one epoch; on reaching the cycle end, restarts at eta_max
    /// with the next cycle stretched by `cycle_mult`.
    pub fn advance_epoch(&mut self) {
        self.t_cur += 1;
        if self.t_cur >= self.t_i {
            self.t_cur = 0;
            self.t_i *= self.cycle_mult;
        }
    }

    pub fn t_cur(&self) -> usize {
        self.t_cur
    }

    pub fn t_i(&self) -> usize {
        self.t_i
    }

    #[cfg(test)]
    pub(crate) fn with_clock(mut self, t_cur: usize) -> Self {
        self.t_cur = t_cur;
        self
    }
}

/// Early-stopping parameters: patience 7, min delta 0.001, and at least
/// 10 epochs before a stop can fire.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EarlyStopConfig {
    pub patience: usize,
    pub min_delta: f64,
    pub min_epochs: usize,
}

impl Default for EarlyStopConfig {
    fn default() -> Self {
        EarlyStopConfig {
            patience: 7,
            min_delta: 0.001,
            min_epochs: 10,
        }
    }
}

/// What one early-stopping update decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    /// Validation loss improved by strictly more than `min_delta`.
    pub improved: bool,
    /// Training should stop after this epoch.
    pub stop: bool,
}

/// Tracks validation loss across epochs. Improvement means
/// `val_loss < best_loss - min_delta` (strict); a stop is signaled only
/// once `patience` stale epochs have accumulated and at least
/// `min_epochs` epochs have run.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    cfg: EarlyStopConfig,
    best_loss: f64,
    best_epoch: usize,
    epochs_since_improve: usize,
}

impl EarlyStopping {
    pub fn new(cfg: EarlyStopConfig) -> Self {
        EarlyStopping {
            cfg,
            best_loss: f64::INFINITY,
            best_epoch: 0,
            epochs_since_improve: 0,
        }
    }

    /// Feed the validation loss for `epoch` (1-based, strictly increasing).
    pub fn update(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        let improved = val_loss < self.best_loss - self.cfg.min_delta;
        if improved {
            self.best_loss = val_loss;
            self.best_epoch = epoch;
            self.epochs_since_improve = 0;
        } else {
            self.epochs_since_improve += 1;
        }
        let stop = self.epochs_since_improve >= self.cfg.patience && epoch >= self.cfg.min_epochs;
        StopDecision { improved, stop }
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// Buffers micro-batch gradients and emits their mean every `steps` calls,
/// keeping the effective learning rate independent of the accumulation
/// factor.
#[derive(Debug, Clone)]
pub struct GradAccumulator {
    steps: usize,
    buffer: Vec<f64>,
    count: usize,
}

impl GradAccumulator {
    pub fn new(steps: usize, dim: usize) -> Result<Self, OptimError> {
        if steps == 0 {
            return Err(OptimError::BadConfig(
                "accumulation steps must be at least 1".to_string(),
            ));
        }
        Ok(GradAccumulator {
            steps,
            buffer: vec![0.0; dim],
            count: 0,
        })
    }

    /// Adds one micro-batch gradient; returns the mean gradient when the
    /// accumulation window fills, resetting the buffer.
    pub fn push(&mut self, grad: &[f64]) -> Result<Option<Vec<f64>>, OptimError> {
        if grad.len() != self.buffer.len() {
            return Err(OptimError::LengthMismatch {
                expected: self.buffer.len(),
                got: grad.len(),
            });
        }
        for (b, g) in self.buffer.iter_mut().zip(grad) {
            *b += g;
        }
        self.count += 1;
        if self.count == self.steps {
            let mean = self.buffer.iter().map(|b| b / self.steps as f64).collect();
            self.buffer.iter_mut().for_each(|b| *b = 0.0);
            self.count = 0;
            Ok(Some(mean))
        } else {
            Ok(None)
        }
    }

    /// Emits whatever is buffered (mean over the partial window), used at
    /// epoch end so trailing micro-batches are not dropped.
    pub fn flush(&mut self) -> Option<Vec<f64>> {
        if self.count == 0 {
            return None;
        }
        let mean = self.buffer.iter().map(|b| b / self.count as f64).collect();
        self.buffer.iter_mut().for_each(|b| *b = 0.0);
        self.count = 0;
        Some(mean)
    }
}
