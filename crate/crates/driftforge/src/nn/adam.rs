//! Adam with bias correction over the model's trainable parameter blocks.

use super::{Gradients, MlpModel, NnError};

/// Optimizer state: one first/second moment buffer per parameter block.
#[derive(Debug, Clone)]
pub struct AdamState {
    step_count: u64,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon_stab: f64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    /// Sizes moment buffers to the model's parameter blocks.
    pub fn new(model: &MlpModel, learning_rate: f64) -> Self {
        let lens = model.param_block_lens();
        Self {
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon_stab: 1e-8,
            first_moment: lens.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: lens.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One Adam update from the given gradients.
    ///
    /// Rejects non-finite gradients before touching any parameter.
    pub fn step(&mut self, model: &mut MlpModel, grads: &Gradients) -> Result<(), NnError> {
        let grad_blocks = grads.blocks();
        if grad_blocks.len() != self.first_moment.len() {
            return Err(NnError::Shape(format!(
                "{} gradient blocks vs {} moment buffers",
                grad_blocks.len(),
                self.first_moment.len()
            )));
        }
        for (i, block) in grad_blocks.iter().enumerate() {
            if block.len() != self.first_moment[i].len() {
                return Err(NnError::Shape(format!("gradient block {i} length mismatch")));
            }
            if block.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFinite("gradients"));
            }
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);

        let mut param_blocks = model.param_blocks_mut();
        for (i, grad) in grad_blocks.iter().enumerate() {
            let m = &mut self.first_moment[i];
            let v = &mut self.second_moment[i];
            let params = &mut param_blocks[i];
            for (((p, &g), mi), vi) in params.iter_mut().zip(grad.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let m_hat = *mi / bias1;
                let v_hat = *vi / bias2;
                *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon_stab);
            }
        }
        Ok(())
    }
}
