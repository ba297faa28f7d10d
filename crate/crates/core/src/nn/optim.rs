use super::error::{NnError, Result};
use super::network::{Gradients, NetworkParams};
use super::tensor::Tensor;

/// Rescales all gradients by `max_norm / g` when their global L2 norm `g`
/// exceeds `max_norm`. Returns the norm before clipping.
pub fn clip_gradients(grads: &mut Gradients, max_norm: f64) -> f64 {
    assert!(max_norm > 0.0, "max_norm must be positive");
    let norm = grads.global_norm();
    if norm <= max_norm {
        return norm;
    }
    let original = grads.tensors.clone();
    let mut scale = max_norm / norm;
    loop {
        for (dst, src) in grads.tensors.iter_mut().zip(&original) {
            for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
                *d = (*s as f64 * scale) as f32;
            }
        }
        // f32 rounding can leave the result a hair above the bound
        if grads.global_norm() <= max_norm {
            return norm;
        }
        scale *= 1.0 - 1e-7;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
}

impl AdamState {
    pub fn new(params: &NetworkParams, lr: f32) -> Self {
        let zeros: Vec<Tensor> = params
            .tensors()
            .iter()
            .map(|t| Tensor::zeros(t.shape().to_vec()))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut NetworkParams, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    if grads.tensors.len() != params.tensors().len() || state.m.len() != params.tensors().len() {
        return Err(NnError::Shape {
            expected: vec![params.tensors().len()],
            found: vec![grads.tensors.len(), state.m.len()],
        });
    }
    for ((p, g), m) in params.tensors().iter().zip(&grads.tensors).zip(&state.m) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(NnError::Shape {
                expected: p.shape().to_vec(),
                found: g.shape().to_vec(),
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    let (lr, eps) = (state.lr, state.epsilon);
    for (((p, g), m), v) in params
        .tensors_mut()
        .iter_mut()
        .zip(&grads.tensors)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for (((pi, &gi), mi), vi) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *pi -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
