use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: u64,
}

impl Adam {
    /// Optimizer for `len` parameters with decay rates 0.9 / 0.999 and
    /// epsilon 1e-8.
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            first: vec![0.0; len],
            second: vec![0.0; len],
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One update of `params` against `grads`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        for len in [params.len(), grads.len()] {
            if len != self.first.len() {
                return Err(Error::ShapeMismatch {
                    expected: self.first.len(),
                    actual: len,
                });
            }
        }
        self.steps += 1;
        let t = self.steps as i32;
        let first_scale = 1.0 / (1.0 - self.beta1.powi(t));
        let second_scale = 1.0 / (1.0 - self.beta2.powi(t));
        let (b1, b2) = (self.beta1, self.beta2);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= self.lr * (*m * first_scale) / ((*v * second_scale).sqrt() + self.eps);
        }
        Ok(())
    }
}
