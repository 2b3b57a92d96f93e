use super::{NetworkWeights, Scalar};
use crate::error::{Error, Result};

/// Adam optimizer state. Moments are stored in the parameter precision;
/// each update is computed in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step<T: Scalar>(
    weights: &mut NetworkWeights<T>,
    grad: &[f64],
    state: &mut AdamState<T>,
) -> Result<()> {
    let n = weights.params().len();
    if grad.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::Shape(format!(
            "optimizer expects {n} entries, gradient has {}",
            grad.len()
        )));
    }
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powf(state.t as f64);
    let c2 = 1.0 - b2.powf(state.t as f64);
    let params = weights.params_mut();
    for i in 0..n {
        let g = grad[i];
        let m = b1 * state.m[i].f64() + (1.0 - b1) * g;
        let v = b2 * state.v[i].f64() + (1.0 - b2) * g * g;
        state.m[i] = T::of(m);
        state.v[i] = T::of(v);
        let step = state.lr * (m / c1) / ((v / c2).sqrt() + state.eps);
        params[i] = T::of(params[i].f64() - step);
    }
    Ok(())
}
