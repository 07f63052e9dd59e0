use serde::{Deserialize, Serialize};

use super::net::{DenseNet, Gradients};
use crate::error::{Error, Result};

/// Optimization schedule and minibatching for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub base_lr: f64,
    pub lr_decay_ratio: f64,
    pub lr_decay_epochs: Vec<usize>,
    pub momentum: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            base_lr: 0.05,
            lr_decay_ratio: 0.1,
            lr_decay_epochs: vec![80, 160],
            momentum: 0.9,
            l2: 1e-4,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad(format!("base_lr must be positive, got {}", self.base_lr));
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size must be at least 2, got {}", self.batch_size));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} not in [0, 1)", self.momentum));
        }
        if self.l2 < 0.0 {
            return bad(format!("l2 must be non-negative, got {}", self.l2));
        }
        if self.lr_decay_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return bad("lr_decay_epochs must be strictly increasing".into());
        }
        if self.lr_decay_epochs.iter().any(|&e| e >= self.epochs) {
            return bad("lr_decay_epochs must all be below epochs".into());
        }
        Ok(())
    }

    /// `base_lr · ratio^(number of decay epochs ≤ epoch)`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let passed = self.lr_decay_epochs.iter().filter(|&&e| e <= epoch).count();
        self.base_lr * self.lr_decay_ratio.powi(passed as i32)
    }
}

/// Heavy-ball momentum: `v ← μv + g`, `w ← w − lr·v`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Momentum {
    velocity: Vec<Vec<f64>>,
}

impl Momentum {
    pub fn new() -> Self {
        Self::default()
    }

    /// Updates each parameter buffer with its matching gradient buffer.
    pub fn apply(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>, lr: f64, momentum: f64) {
        assert_eq!(params.len(), grads.len(), "parameter and gradient lists differ");
        if self.velocity.is_empty() {
            self.velocity = grads.iter().map(|g| vec![0.0; g.len()]).collect();
        }
        for ((p, g), v) in params.into_iter().zip(grads).zip(&mut self.velocity) {
            assert_eq!(p.len(), g.len());
            for ((w, &gi), vi) in p.iter_mut().zip(g).zip(v.iter_mut()) {
                *vi = momentum * *vi + gi;
                *w -= lr * *vi;
            }
        }
    }
}

/// SGD with momentum on a [`DenseNet`], following the step schedule in `config`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    state: Momentum,
}

impl Sgd {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step(&mut self, net: &mut DenseNet, grads: &Gradients, config: &TrainConfig, epoch: usize) -> Result<()> {
        if epoch >= config.epochs {
            return Err(Error::Config(format!("epoch {epoch} beyond schedule of {}", config.epochs)));
        }
        if grads.layers.len() != net.layers.len() {
            return Err(Error::Shape("gradient layer count differs from network".into()));
        }
        self.state
            .apply(net.params_mut(), grads.slices(), config.lr_at(epoch), config.momentum);
        Ok(())
    }
}
