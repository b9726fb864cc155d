use serde::{Deserialize, Serialize};

use super::Param;
use crate::error::{Error, Result};

/// Adam with bias correction. Moments are kept per parameter tensor, in the
/// order the network lists its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut Param]) -> Result<()> {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() || self.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len()) {
            return Err(Error::Shape("optimizer state does not match the parameters".into()));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let (value, grad) = p.split_mut();
            for i in 0..value.len() {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                value[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Reduce-on-plateau for a metric where lower is better, with a relative threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub factor: f64,
    pub min_lr: f64,
    pub threshold: f64,
    pub patience: u64,
    pub best: f64,
    pub bad_steps: u64,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, min_lr: f64, threshold: f64, patience: u64) -> Self {
        Self {
            lr,
            factor,
            min_lr,
            threshold,
            patience,
            best: f64::INFINITY,
            bad_steps: 0,
        }
    }

    /// lr 0.001, factor 0.5, min lr 0.0001, threshold 0.0001, patience 484.
    pub fn standard() -> Self {
        Self::new(1e-3, 0.5, 1e-4, 1e-4, 484)
    }

    pub fn step(&mut self, metric: f64) -> f64 {
        if metric < self.best * (1.0 - self.threshold) {
            self.best = metric;
            self.bad_steps = 0;
        } else {
            self.bad_steps += 1;
        }
        if self.bad_steps > self.patience {
            self.lr = (self.lr * self.factor).max(self.min_lr);
            self.bad_steps = 0;
        }
        self.lr
    }
}
