//! SGD with momentum and weight decay.

use super::params::ParameterVector;
use crate::error::{Error, Result};
use alloc::vec;
use alloc::vec::Vec;

/// Per-client optimizer state. Momentum buffers persist across rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub momentum: Vec<f32>,
    pub lr: f32,
    pub momentum_coef: f32,
    pub weight_decay: f32,
}

impl OptimizerState {
    pub fn new(dim: usize, lr: f32, momentum_coef: f32, weight_decay: f32) -> Self {
        Self {
            momentum: vec![0.0; dim],
            lr,
            momentum_coef,
            weight_decay,
        }
    }
}

/// One descent step:
/// `m <- mu*m + grad + decay*w` then `w <- w - lr*m`.
pub fn sgd_step(
    params: &mut ParameterVector,
    grad: &[f32],
    opt: &mut OptimizerState,
) -> Result<()> {
    if grad.len() != params.dim() {
        return Err(Error::Shape {
            what: "gradient",
            expected: params.dim(),
            got: grad.len(),
        });
    }
    if opt.momentum.len() != params.dim() {
        return Err(Error::Shape {
            what: "momentum buffer",
            expected: params.dim(),
            got: opt.momentum.len(),
        });
    }
    for ((w, m), &g) in params.values.iter_mut().zip(&mut opt.momentum).zip(grad) {
        *m = opt.momentum_coef * *m + g + opt.weight_decay * *w;
        *w -= opt.lr * *m;
    }
    Ok(())
}
