//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl AdamState {
    pub fn new<'a>(config: AdamConfig, blocks: impl IntoIterator<Item = &'a Matrix>) -> Self {
        let first: Vec<Matrix> = blocks.into_iter().map(|b| Matrix::zeros(b.rows(), b.cols())).collect();
        let second = first.clone();
        Self { config, step: 0, first, second }
    }

    pub(crate) fn from_parts(config: AdamConfig, step: u64, first: Vec<Matrix>, second: Vec<Matrix>) -> Result<Self> {
        if first.len() != second.len() || first.iter().zip(&second).any(|(a, b)| a.shape() != b.shape()) {
            return Err(Error::Shape("adam moment lists are not aligned".into()));
        }
        Ok(Self { config, step, first, second })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Matrix], &[Matrix]) {
        (&self.first, &self.second)
    }

    /// One update of every block. Gradients are validated before anything is
    /// written, so a rejected step leaves parameters and moments untouched.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix], names: &[String]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::Shape(format!(
                "adam expects {} blocks, got {} parameters and {} gradients",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.first[i].shape() {
                return Err(Error::Shape(format!("block {i} shape mismatch")));
            }
            if !g.is_finite() {
                let name = names.get(i).cloned().unwrap_or_else(|| format!("block {i}"));
                return Err(Error::NonFiniteGradient(name));
            }
        }

        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            for (((pv, &gv), mv), vv) in
                p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut())
            {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let m_hat = *mv / c1;
                let v_hat = *vv / c2;
                *pv -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step(params: &mut [&mut Matrix], grads: &[Matrix], state: &mut AdamState) -> Result<()> {
    state.step(params, grads, &[])
}
