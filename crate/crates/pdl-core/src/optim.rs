//! AdamW with decoupled weight decay, cosine annealing, and global-norm
//! gradient clipping.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;
use crate::tensor::Tensor;

/// Cosine-annealed learning rate `base * 0.5 * (1 + cos(pi * e / E))`.
///
/// `epoch` must lie in `[0, total_epochs)`; epoch 0 returns `base_lr`.
pub fn cosine_anneal_lr(base_lr: f64, epoch: usize, total_epochs: usize) -> f64 {
    debug_assert!(epoch < total_epochs);
    let progress = epoch as f64 / total_epochs as f64;
    let lr = base_lr * 0.5 * (1.0 + fmath::cos(core::f64::consts::PI * progress));
    lr.max(0.0)
}

/// Scales all gradients by `max_norm / norm` when their joint L2 norm
/// exceeds `max_norm`; returns the applied scale (1.0 when untouched).
pub fn clip_grad_norm(grads: &mut [&mut Tensor], max_norm: f64) -> f64 {
    debug_assert!(max_norm > 0.0);
    let total: f64 = grads
        .iter()
        .map(|g| g.data().iter().map(|&v| v * v).sum::<f64>())
        .sum();
    let norm = fmath::sqrt(total);
    if norm <= max_norm {
        return 1.0;
    }
    let scale = max_norm / norm;
    for g in grads.iter_mut() {
        for v in g.data_mut() {
            *v *= scale;
        }
    }
    scale
}

/// First/second-moment accumulators for one parameter group.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerState {
    /// Accumulators shaped after the given parameter group.
    pub fn new(params: &[&Tensor]) -> Self {
        Self {
            first: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            second: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected AdamW step over a parameter group.
///
/// The decoupled decay `theta -= lr * wd * theta` and the Adam term are
/// both taken from the pre-step parameter value.
pub fn adamw_step(
    params: &mut [&mut Tensor],
    grads: &[&Tensor],
    state: &mut OptimizerState,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first.len() {
        return Err(Error::Config(alloc::format!(
            "optimizer group mismatch: {} params, {} grads, {} slots",
            params.len(),
            grads.len(),
            state.first.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::ShapeMismatch {
                op: "adamw_step",
                lhs: p.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
    }

    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - fmath::pow(state.beta1, t);
    let bc2 = 1.0 - fmath::pow(state.beta2, t);

    for (slot, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.first[slot];
        let v = &mut state.second[slot];
        let theta = p.data_mut();
        let grad = g.data();
        for i in 0..theta.len() {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * grad[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            let update = lr * m_hat / (fmath::sqrt(v_hat) + state.eps);
            theta[i] -= lr * weight_decay * theta[i] + update;
        }
    }
    Ok(())
}
