//! Adamax with elementwise gradient clipping.

use super::GruModel;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Adamax {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Gradients are clipped to `[-clip, clip]` before the moment updates.
    pub clip: f64,
    step: u64,
    moment: Vec<f64>,
    inf_norm: Vec<f64>,
}

impl Adamax {
    pub fn new(num_params: usize, learning_rate: f64, clip: f64) -> Self {
        Adamax {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip,
            step: 0,
            moment: vec![0.0; num_params],
            inf_norm: vec![0.0; num_params],
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn moment(&self) -> &[f64] {
        &self.moment
    }

    pub fn inf_norm(&self) -> &[f64] {
        &self.inf_norm
    }

    /// Applies one update to a flat parameter vector.
    ///
    /// ```text
    /// g = clamp(grad, -clip, clip)
    /// m = β1 m + (1 - β1) g
    /// u = max(β2 u, |g|)
    /// θ -= lr / (1 - β1^t) * m / max(u, ε)
    /// ```
    pub fn step_flat(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.moment.len() || grads.len() != params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.moment.len(),
                found: grads.len().min(params.len()),
            });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient".into()));
        }
        self.step += 1;
        let step_size = self.learning_rate / (1.0 - self.beta1.powi(self.step as i32));
        for (((p, &g), m), u) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.moment)
            .zip(&mut self.inf_norm)
        {
            let g = g.clamp(-self.clip, self.clip);
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *u = (self.beta2 * *u).max(g.abs());
            *p -= step_size * *m / u.max(self.eps);
        }
        Ok(())
    }

    /// Updates every tensor of `model` in declaration order.
    pub fn step(&mut self, model: &mut GruModel, grads: &GruModel) -> Result<()> {
        if model.num_params() != self.moment.len() || grads.num_params() != self.moment.len() {
            return Err(Error::DimensionMismatch {
                expected: self.moment.len(),
                found: grads.num_params(),
            });
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        let mut flat = model.flatten();
        self.step_flat(&mut flat, &grads.flatten())?;
        model.assign_flat(&flat)
    }
}
