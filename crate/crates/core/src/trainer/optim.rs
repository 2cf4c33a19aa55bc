//! Adaptive-moment optimizer with decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::encoder::{ContextEncoder, GradBuffer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            learning_rate: 1e-3,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay must be non-negative"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(format!("{name} must lie in [0, 1)")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::config("eps must be positive"));
        }
        Ok(())
    }
}

/// First and second moments, one tensor per parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub step: u64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(shapes: &[usize]) -> Self {
        OptimizerState {
            step: 0,
            first_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_model<E: ContextEncoder>(model: &E) -> Self {
        let shapes: Vec<usize> = model.parameters().iter().map(|(_, p)| p.len()).collect();
        Self::new(&shapes)
    }

    pub fn shapes(&self) -> Vec<usize> {
        self.first_moment.iter().map(Vec::len).collect()
    }
}

/// Updates `params` in place from `grads`, then zeroes `grads`.
///
/// ```text
/// m <- b1 m + (1 - b1) g          v <- b2 v + (1 - b2) g^2
/// θ <- θ - lr (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
/// θ <- θ - lr wd θ
/// ```
pub fn adamw_update(
    params: &mut [&mut [f64]],
    grads: &mut GradBuffer,
    state: &mut OptimizerState,
    cfg: &AdamWConfig,
) -> Result<()> {
    let shapes: Vec<usize> = params.iter().map(|p| p.len()).collect();
    if grads.shapes() != shapes || state.shapes() != shapes {
        return Err(Error::Shape(
            "optimizer state, gradients and parameters differ in shape".into(),
        ));
    }
    if let Some(bad) = grads.tensors.iter().flatten().find(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite gradient ({bad}) at optimizer step {}",
            state.step + 1
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let decay = cfg.learning_rate * cfg.weight_decay;
    for (k, p) in params.iter_mut().enumerate() {
        let g = &grads.tensors[k];
        let m = &mut state.first_moment[k];
        let v = &mut state.second_moment[k];
        for i in 0..p.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
            p[i] -= decay * p[i];
        }
    }
    grads.zero();
    Ok(())
}

pub fn optimizer_step<E: ContextEncoder>(
    model: &mut E,
    grads: &mut GradBuffer,
    state: &mut OptimizerState,
    cfg: &AdamWConfig,
) -> Result<()> {
    let mut params: Vec<&mut [f64]> = model.parameters_mut().into_iter().map(|(_, p)| p).collect();
    adamw_update(&mut params, grads, state, cfg)
}
