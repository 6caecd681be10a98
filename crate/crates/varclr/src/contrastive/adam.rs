//! Adam with bias-corrected moments and global-norm gradient clipping.

use super::TrainError;
use crate::encoders::{EncoderParams, Gradients};

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global ℓ2 bound applied to the gradients before the update.
    pub clip_norm: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: 1.0,
        }
    }
}

/// Per-parameter moment accumulators plus the shared step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        AdamState {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// Scale all gradients by `bound / norm` when their global ℓ2 norm exceeds
/// `bound`; otherwise leave them untouched. Returns the pre-clip norm.
pub fn clip_gradients(grads: &mut Gradients, bound: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > bound && norm > 0.0 {
        grads.scale(bound / norm);
    }
    norm
}

/// One Adam update: clip, advance the step counter, then apply the
/// bias-corrected elementwise rule to every parameter.
pub fn adam_step(
    params: &mut EncoderParams,
    grads: &mut Gradients,
    state: &mut AdamState,
    config: &AdamConfig,
) -> Result<(), TrainError> {
    let param_count = params.param_count();
    if state.m.len() != param_count {
        return Err(TrainError::ShapeMismatch {
            state: state.m.len(),
            params: param_count,
        });
    }
    let grad_count: usize = grads.slices().iter().map(|s| s.len()).sum();
    if grad_count != param_count {
        return Err(TrainError::ShapeMismatch {
            state: grad_count,
            params: param_count,
        });
    }

    clip_gradients(grads, config.clip_norm);
    state.step += 1;
    let bias1 = 1.0 - config.beta1.powi(state.step as i32);
    let bias2 = 1.0 - config.beta2.powi(state.step as i32);

    let mut offset = 0;
    let grad_slices = grads.slices();
    for (p_slice, g_slice) in params.param_slices_mut().into_iter().zip(grad_slices) {
        for (k, (p, g)) in p_slice.iter_mut().zip(g_slice.iter()).enumerate() {
            let idx = offset + k;
            state.m[idx] = config.beta1 * state.m[idx] + (1.0 - config.beta1) * g;
            state.v[idx] = config.beta2 * state.v[idx] + (1.0 - config.beta2) * g * g;
            let m_hat = state.m[idx] / bias1;
            let v_hat = state.v[idx] / bias2;
            *p -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
        }
        offset += p_slice.len();
    }
    Ok(())
}
