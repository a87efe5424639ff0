//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::gradcheck::ParameterSet;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<P> {
    pub m: P,
    pub v: P,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

fn zeroed<P: ParameterSet + Clone>(params: &P) -> P {
    let mut out = params.clone();
    for i in 0..out.tensor_count() {
        out.tensor_mut(i).fill(0.0);
    }
    out
}

impl<P: ParameterSet + Clone> AdamState<P> {
    /// Fresh state with the usual defaults `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    pub fn new(params: &P) -> Self {
        Self::with_hyper(params, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(params: &P, beta1: f64, beta2: f64, eps_hat: f64) -> Self {
        Self {
            m: zeroed(params),
            v: zeroed(params),
            step: 0,
            beta1,
            beta2,
            eps_hat,
        }
    }
}

/// One Adam update of every tensor in `params`.
pub fn adam_step<P: ParameterSet>(params: &mut P, grads: &P, state: &mut AdamState<P>, lr: f64) -> Result<()> {
    let n = params.tensor_count();
    if grads.tensor_count() != n || state.m.tensor_count() != n || state.v.tensor_count() != n {
        return Err(Error::DimensionMismatch {
            op: "adam_step (tensor count)",
            expected: n,
            actual: grads.tensor_count(),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps_hat);
    let bias1 = 1.0 - b1.powi(t);
    let bias2 = 1.0 - b2.powi(t);

    for i in 0..n {
        let g = grads.tensor(i);
        let len = params.tensor(i).len();
        if g.len() != len || state.m.tensor(i).len() != len || state.v.tensor(i).len() != len {
            return Err(Error::DimensionMismatch {
                op: "adam_step (tensor shape)",
                expected: len,
                actual: g.len(),
            });
        }
        let theta = params.tensor_mut(i);
        let m = state.m.tensor_mut(i);
        let v = state.v.tensor_mut(i);
        for (((th, mj), vj), gj) in theta.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
            *mj = b1 * *mj + (1.0 - b1) * gj;
            *vj = b2 * *vj + (1.0 - b2) * gj * gj;
            let m_hat = *mj / bias1;
            let v_hat = *vj / bias2;
            *th -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// `base_lr * decay^epoch`, applied once per epoch.
pub fn decay_lr(base_lr: f64, decay: f64, epoch: usize) -> f64 {
    base_lr * decay.powi(epoch as i32)
}
