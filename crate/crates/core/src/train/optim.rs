//! Adam with the AMSGrad maximum on the second moment.

use crate::error::{LfError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Elementwise running maximum of `v`.
    pub v_max: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(len: usize) -> Self {
        OptimizerState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            v_max: vec![0.0; len],
            step: 0,
        }
    }
}

/// One update of `params` in place:
/// `p -= lr / (1 - b1^t) * m / (sqrt(v_max) / sqrt(1 - b2^t) + eps)`.
pub fn adam_amsgrad_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut OptimizerState,
    hyper: &AdamHyper,
) -> Result<()> {
    let n = params.len();
    for len in [grads.len(), state.m.len(), state.v.len(), state.v_max.len()] {
        if len != n {
            return Err(LfError::ShapeMismatch(format!(
                "optimizer expects {n} values, got {len}"
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2_sqrt = (1.0 - hyper.beta2.powi(t)).sqrt();
    let step_size = hyper.lr / bc1;
    for i in 0..n {
        let g = grads[i];
        state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g;
        state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * g * g;
        state.v_max[i] = state.v_max[i].max(state.v[i]);
        let denom = state.v_max[i].sqrt() / bc2_sqrt + hyper.eps;
        params[i] -= step_size * state.m[i] / denom;
    }
    Ok(())
}
