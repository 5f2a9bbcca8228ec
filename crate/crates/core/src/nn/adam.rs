use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};

/// Adam hyperparameters. Defaults: lr 1e-3, β1 0.9, β2 0.999, ε 1e-8.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.learning_rate >= 0.0
            && self.learning_rate.is_finite();
        if ok {
            Ok(())
        } else {
            Err(config(format!("invalid Adam configuration {self:?}")))
        }
    }

    pub fn with_learning_rate(self, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..self
        }
    }
}

/// First/second moment estimates, one buffer per parameter block.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(block_sizes: &[usize]) -> Self {
        Self {
            step: 0,
            first: block_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: block_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.second
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.first.iter().map(Vec::len).collect()
    }

    /// One bias-corrected Adam update over `params`, block by block.
    ///
    /// Every gradient block is checked for finiteness before anything is
    /// touched, so a failed step leaves parameters and moments unchanged.
    pub fn update(
        &mut self,
        params: &mut [&mut [f64]],
        grads: &[&[f64]],
        names: &[String],
        cfg: &AdamConfig,
    ) -> Result<()> {
        cfg.validate()?;
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(crate::error::shape(format!(
                "expected {} parameter blocks, got {} parameters and {} gradients",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (b, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.first[b].len() || g.len() != p.len() {
                return Err(crate::error::shape(format!(
                    "{}: parameter/gradient length mismatch ({} vs {})",
                    names[b],
                    p.len(),
                    g.len()
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite gradient in {}",
                    names[b]
                )));
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let correction1 = 1.0 - cfg.beta1.powi(t);
        let correction2 = 1.0 - cfg.beta2.powi(t);
        for (b, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first[b];
            let v = &mut self.second[b];
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
                let m_hat = m[i] / correction1;
                let v_hat = v[i] / correction2;
                p[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        }
        Ok(())
    }
}
