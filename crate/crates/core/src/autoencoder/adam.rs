//! ADAM with bias correction, followed by column projection of the encoder.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::network::{parameter_tensors, Gradients, Model};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
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
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Config(format!("{name} = {b} is outside (0, 1)")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(model: &mut Model) -> Self {
        let sizes: Vec<usize> = parameter_tensors(model).iter().map(|t| t.len()).collect();
        Self {
            step: 0,
            first: sizes.iter().map(|&s| vec![0.0; s]).collect(),
            second: sizes.iter().map(|&s| vec![0.0; s]).collect(),
        }
    }
}

/// Raw ADAM update of flat tensors at step `t >= 1` (no projection).
pub fn adam_update(
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    first: &mut [Vec<f64>],
    second: &mut [Vec<f64>],
    t: u64,
    cfg: &AdamConfig,
) -> Result<()> {
    if t == 0 {
        return Err(Error::InvalidArgument("ADAM step index starts at 1".into()));
    }
    if params.len() != grads.len() || params.len() != first.len() || params.len() != second.len() {
        return Err(Error::dims(
            "adam_update",
            format!("{} tensors", params.len()),
            format!("{} gradients", grads.len()),
        ));
    }
    let c1 = 1.0 - cfg.beta1.powi(t as i32);
    let c2 = 1.0 - cfg.beta2.powi(t as i32);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(first.iter_mut()).zip(second.iter_mut()) {
        if p.len() != g.len() || p.len() != m.len() {
            return Err(Error::dims("adam tensor", format!("{}", p.len()), format!("{}", g.len())));
        }
        for i in 0..p.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

/// One ADAM step on every parameter, then re-projection of the encoder columns.
pub fn adam_step<R: Rng + ?Sized>(
    model: &mut Model,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &AdamConfig,
    rng: &mut R,
) -> Result<()> {
    state.step += 1;
    {
        let mut params = parameter_tensors(model);
        adam_update(
            &mut params,
            &grads.tensors(),
            &mut state.first,
            &mut state.second,
            state.step,
            cfg,
        )?;
    }
    model.encoder.project_columns(rng);
    Ok(())
}
