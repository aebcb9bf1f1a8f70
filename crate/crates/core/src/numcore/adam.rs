//! Adam with bias correction and an explicit hard reset.
//!
//! No weight decay. A zero gradient on a fresh (or freshly reset) state
//! produces an update of exactly `0.0`, which is what keeps inactive
//! neurons bit-identical across task blocks.

use serde::{Deserialize, Serialize};

use crate::error::{FtnError, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Learning rate of the model optimizer.
pub const MODEL_LR: f64 = 3e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
    lr: f64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        Self { first_moment: vec![0.0; len], second_moment: vec![0.0; len], step_count: 0, lr }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn len(&self) -> usize {
        self.first_moment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_moment.is_empty()
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }

    pub fn step(&mut self, param: &mut [f64], grad: &[f64]) -> Result<()> {
        if param.len() != grad.len() || param.len() != self.first_moment.len() {
            return Err(FtnError::Config(format!(
                "adam shape mismatch: param {}, grad {}, state {}",
                param.len(),
                grad.len(),
                self.first_moment.len()
            )));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bias1 = 1.0 - BETA1.powi(t);
        let bias2 = 1.0 - BETA2.powi(t);
        let lr = self.lr;
        for (((p, &g), m), v) in
            param.iter_mut().zip(grad).zip(self.first_moment.iter_mut()).zip(self.second_moment.iter_mut())
        {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= lr * m_hat / (v_hat.sqrt() + EPSILON);
        }
        Ok(())
    }

    /// Zero both moments and the step counter; the learning rate survives.
    pub fn reset(&mut self) {
        self.first_moment.iter_mut().for_each(|m| *m = 0.0);
        self.second_moment.iter_mut().for_each(|v| *v = 0.0);
        self.step_count = 0;
    }
}
