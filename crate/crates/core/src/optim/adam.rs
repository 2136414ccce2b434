use alloc::vec;
use alloc::vec::Vec;

use super::{check_gradient, Objective, Outcome, Status};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamState {
    pub fn new(n: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// One bias-corrected update, in index order.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(invalid("adam: parameter, gradient and state lengths differ"));
        }
        check_gradient(grads)?;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.t += 1;
        let c1 = 1.0 - libm::pow(beta1, self.t as f64);
        let c2 = 1.0 - libm::pow(beta2, self.t as f64);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (libm::sqrt(v_hat) + eps);
        }
        Ok(())
    }
}

/// Run `epochs` Adam steps. The trace holds the loss before every step and
/// after the last one. A non-finite loss stops the run with `Diverged`.
pub fn adam_minimize(mut objective: impl Objective, x0: &[f64], epochs: usize, config: AdamConfig) -> Result<Outcome> {
    let mut x = x0.to_vec();
    let mut state = AdamState::new(x.len(), config);
    let mut losses = Vec::with_capacity(epochs + 1);
    let mut evaluations = 0;
    for epoch in 0..=epochs {
        let (f, g) = objective.eval(&x)?;
        evaluations += 1;
        losses.push(f);
        if !f.is_finite() {
            return Ok(Outcome {
                params: x,
                losses,
                status: Status::Diverged,
                evaluations,
            });
        }
        if epoch == epochs {
            break;
        }
        state.step(&mut x, &g)?;
    }
    Ok(Outcome {
        params: x,
        losses,
        status: Status::MaxEpochs,
        evaluations,
    })
}
