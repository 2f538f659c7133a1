//! SGD with momentum and Adam over a fixed, ordered parameter list.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Result};
use crate::math;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimKind {
    SgdMomentum,
    Adam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub kind: OptimKind,
    pub lr: f32,
    pub momentum: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub step_count: u64,
    /// Velocity (SGD) or first moment (Adam), one buffer per parameter.
    first: Vec<Vec<f32>>,
    /// Second moment (Adam only).
    second: Vec<Vec<f32>>,
}

impl OptimState {
    pub fn sgd(lr: f32, momentum: f32) -> Self {
        Self {
            kind: OptimKind::SgdMomentum,
            lr,
            momentum,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn adam(lr: f32) -> Self {
        Self {
            kind: OptimKind::Adam,
            ..Self::sgd(lr, 0.0)
        }
    }

    pub fn first_moments(&self) -> &[Vec<f32>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f32>] {
        &self.second
    }

    /// Allocates buffers on the first step; afterwards the parameter list
    /// must keep the same count and sizes.
    fn lock_buffers(&mut self, params: &[&mut Tensor]) -> Result<()> {
        if self.first.is_empty() && self.step_count == 0 {
            self.first = params.iter().map(|p| vec![0.0; p.len()]).collect();
            if self.kind == OptimKind::Adam {
                self.second = self.first.clone();
            }
            return Ok(());
        }
        if self.first.len() != params.len() {
            return Err(shape_err!(
                "optimizer tracks {} parameters, got {}",
                self.first.len(),
                params.len()
            ));
        }
        for (i, (buf, p)) in self.first.iter().zip(params).enumerate() {
            if buf.len() != p.len() {
                return Err(shape_err!(
                    "parameter {i} changed size from {} to {}",
                    buf.len(),
                    p.len()
                ));
            }
        }
        Ok(())
    }

    /// Applies one update using each parameter's gradient buffer (missing
    /// gradients count as zero).
    pub fn step(&mut self, params: &mut [&mut Tensor]) -> Result<()> {
        match self.kind {
            OptimKind::SgdMomentum => sgd_step(params, self),
            OptimKind::Adam => adam_step(params, self),
        }
    }
}

/// `v ← momentum·v − lr·g; p ← p + v`.
pub fn sgd_step(params: &mut [&mut Tensor], state: &mut OptimState) -> Result<()> {
    state.lock_buffers(params)?;
    let (lr, mom) = (state.lr, state.momentum);
    for (p, v) in params.iter_mut().zip(state.first.iter_mut()) {
        let (data, grad) = p.data_and_grad_mut();
        for ((x, g), vel) in data.iter_mut().zip(grad.iter()).zip(v.iter_mut()) {
            *vel = mom * *vel - lr * *g;
            *x += *vel;
        }
    }
    state.step_count += 1;
    Ok(())
}

/// Bias-corrected Adam update.
pub fn adam_step(params: &mut [&mut Tensor], state: &mut OptimState) -> Result<()> {
    state.lock_buffers(params)?;
    if state.second.len() != state.first.len() {
        state.second = state.first.iter().map(|b| vec![0.0; b.len()]).collect();
    }
    state.step_count += 1;
    let t = state.step_count as f64;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - math::pow(b1 as f64, t);
    let c2 = 1.0 - math::pow(b2 as f64, t);
    let step = (state.lr as f64 * math::sqrt(c2) / c1) as f32;
    // eps is applied to the bias-corrected second moment
    let eps_hat = (state.eps as f64 * math::sqrt(c2)) as f32;
    for ((p, m), v) in params
        .iter_mut()
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
    {
        let (data, grad) = p.data_and_grad_mut();
        for (((x, g), mi), vi) in data.iter_mut().zip(grad.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (1.0 - b1) * *g;
            *vi = b2 * *vi + (1.0 - b2) * *g * *g;
            *x -= step * *mi / (math::sqrtf(*vi) + eps_hat);
        }
    }
    Ok(())
}
