use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Steps between learning-rate decays.
pub const DECAY_INTERVAL: u64 = 1000;

/// AdamW with decoupled weight decay and a step-wise learning-rate decay.
///
/// The update is `θ ← θ − lr·(m̂ / (√v̂ + eps) + ω·θ)`; after every
/// [`DECAY_INTERVAL`]-th step the learning rate is multiplied by `lr_decay`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub lr: f64,
    pub weight_decay: f64,
    pub lr_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamW {
    pub fn new(num_params: usize, lr: f64, weight_decay: f64, lr_decay: f64) -> Self {
        assert!(lr > 0.0, "learning rate must be positive");
        AdamW {
            lr,
            weight_decay,
            lr_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Learning rate the next step will use.
    pub fn current_lr(&self) -> f64 {
        self.lr
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient(i));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let update = (*m / bc1) / ((*v / bc2).sqrt() + self.eps);
            *p -= self.lr * (update + self.weight_decay * *p);
        }
        if self.step % DECAY_INTERVAL == 0 {
            self.lr *= self.lr_decay;
        }
        Ok(())
    }
}
