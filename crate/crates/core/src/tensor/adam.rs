use alloc::vec;
use alloc::vec::Vec;

use super::{ParamStore, Result, TensorError};

/// Adam moments for every parameter of a store, in registration order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    /// `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    pub fn new(params: &ParamStore, lr: f64) -> Self {
        Self::with_betas(params, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(params: &ParamStore, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .iter()
            .map(|(_, _, t)| vec![0.0; t.numel()])
            .collect();
        AdamState {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update over every parameter, then zeroes the
/// gradients. Fails before touching anything if a gradient is missing.
pub fn adam_step(params: &mut ParamStore, state: &mut AdamState) -> Result<()> {
    if state.first.len() != params.len() {
        return Err(TensorError::Invalid {
            op: "adam_step",
            msg: alloc::format!(
                "state tracks {} parameters, store has {}",
                state.first.len(),
                params.len()
            ),
        });
    }
    for (id, name, t) in params.iter() {
        if t.grad().is_none() {
            return Err(TensorError::MissingGrad(name.into()));
        }
        if state.first[id.0].len() != t.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "adam_step",
                left: t.shape().to_vec(),
                right: vec![state.first[id.0].len()],
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - libm::pow(state.beta1, t as f64);
    let bc2 = 1.0 - libm::pow(state.beta2, t as f64);
    let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.lr, state.eps);
    for (i, tensor) in params.tensors_mut().iter_mut().enumerate() {
        let grad = tensor.grad().expect("checked above").to_vec();
        let m = &mut state.first[i];
        let v = &mut state.second[i];
        let data = tensor.data_mut();
        for k in 0..data.len() {
            let g = grad[k];
            m[k] = b1 * m[k] + (1.0 - b1) * g;
            v[k] = b2 * v[k] + (1.0 - b2) * g * g;
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            data[k] -= lr * m_hat / (libm::sqrt(v_hat) + eps);
        }
        tensor.zero_grad();
    }
    Ok(())
}
