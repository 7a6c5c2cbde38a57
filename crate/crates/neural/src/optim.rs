//! AdamW, the warmup plus half-cosine learning-rate schedule, and early stopping.

use serde::{Deserialize, Serialize};

use crate::graph::{Grads, ParamStore};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptimError {
    #[error("invalid optimizer config: {0}")]
    Config(String),
    #[error("step {step} outside schedule range 0..={total}")]
    StepOutOfRange { step: usize, total: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(OptimError::Config(format!("lr must be positive, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(OptimError::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if self.weight_decay < 0.0 || self.eps <= 0.0 {
            return Err(OptimError::Config("weight_decay must be >= 0 and eps > 0".into()));
        }
        Ok(())
    }
}

/// Adam with decoupled weight decay and bias-corrected moments.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub cfg: OptimizerConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamW {
    pub fn new(cfg: OptimizerConfig, store: &ParamStore) -> Result<Self, OptimError> {
        cfg.validate()?;
        let zeros = store.zero_grads().0;
        Ok(Self {
            cfg,
            m: zeros.clone(),
            v: zeros,
            step: 0,
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update at learning rate `lr`.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads, lr: f64) {
        self.step += 1;
        let OptimizerConfig {
            weight_decay,
            beta1,
            beta2,
            eps,
            ..
        } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let ids: Vec<_> = store.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            let g = grads.get(id);
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            let p = &mut store.value_mut(id).data;
            for j in 0..p.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p[j] -= lr * weight_decay * p[j];
                p[j] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub warmup: usize,
    pub total: usize,
    pub peak: f64,
}

impl LrSchedule {
    pub fn new(warmup: usize, total: usize, peak: f64) -> Result<Self, OptimError> {
        if warmup > total {
            return Err(OptimError::Config(format!("warmup {warmup} exceeds total {total}")));
        }
        Ok(Self { warmup, total, peak })
    }
}

/// Linear ramp to `peak` over the warmup, then half a cosine down to 0 at `total`.
pub fn lr_at(s: &LrSchedule, step: usize) -> Result<f64, OptimError> {
    if step > s.total {
        return Err(OptimError::StepOutOfRange { step, total: s.total });
    }
    if step < s.warmup {
        return Ok(s.peak * step as f64 / s.warmup as f64);
    }
    if step == s.total {
        return Ok(if s.total == s.warmup { s.peak } else { 0.0 });
    }
    let t = (step - s.warmup) as f64 / (s.total - s.warmup) as f64;
    Ok(s.peak * 0.5 * (1.0 + (std::f64::consts::PI * t).cos()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopVerdict {
    Improved,
    NoImprovement,
    Stop,
}

/// Stops after `patience` consecutive epochs whose loss fails to beat the
/// best so far by at least `min_rel_improvement` of its magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub min_rel_improvement: f64,
    best: Option<f64>,
    bad_epochs: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_rel_improvement: f64) -> Self {
        assert!(patience >= 1, "patience must be at least 1");
        Self {
            patience,
            min_rel_improvement,
            best: None,
            bad_epochs: 0,
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn observe(&mut self, loss: f64) -> StopVerdict {
        let improved = match self.best {
            None => true,
            Some(best) => loss < best - self.min_rel_improvement * best.abs(),
        };
        if improved {
            self.best = Some(loss);
            self.bad_epochs = 0;
            StopVerdict::Improved
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                StopVerdict::Stop
            } else {
                StopVerdict::NoImprovement
            }
        }
    }
}
