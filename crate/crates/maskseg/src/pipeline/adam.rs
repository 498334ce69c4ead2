//! Adam with bias correction:
//! m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2;
//! theta <- theta - lr * m/(1-b1^t) / (sqrt(v/(1-b2^t)) + eps).

use crate::error::{Error, Result};
use crate::nn::{ModelParams, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: ModelParams<f32>,
    pub v: ModelParams<f32>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams<f32>) -> Self {
        AdamState { m: params.zeros_like(), v: params.zeros_like(), t: 0 }
    }
}

/// One optimizer step, elementwise over every parameter tensor. The step
/// counter is incremented before bias correction.
pub fn adam_step(
    params: &mut ModelParams<f32>,
    grads: &ModelParams<f32>,
    state: &mut AdamState,
    hyper: &AdamHyper,
) -> Result<()> {
    if params.entries.len() != grads.entries.len() {
        return Err(Error::validation("gradient list does not match parameters"));
    }
    state.t += 1;
    let bc1 = 1.0 - hyper.beta1.powi(state.t as i32);
    let bc2 = 1.0 - hyper.beta2.powi(state.t as i32);
    for i in 0..params.entries.len() {
        let (pname, p) = &mut params.entries[i];
        let (gname, g) = &grads.entries[i];
        if pname != gname || p.shape != g.shape {
            return Err(Error::validation(format!(
                "gradient {gname} does not match parameter {pname}"
            )));
        }
        let m: &mut Tensor<f32> = &mut state.m.entries[i].1;
        let v: &mut Tensor<f32> = &mut state.v.entries[i].1;
        for j in 0..p.data.len() {
            let gj = g.data[j];
            m.data[j] = hyper.beta1 * m.data[j] + (1.0 - hyper.beta1) * gj;
            v.data[j] = hyper.beta2 * v.data[j] + (1.0 - hyper.beta2) * gj * gj;
            let m_hat = m.data[j] / bc1;
            let v_hat = v.data[j] / bc2;
            p.data[j] -= hyper.learning_rate * m_hat / (v_hat.sqrt() + hyper.epsilon);
        }
    }
    Ok(())
}
