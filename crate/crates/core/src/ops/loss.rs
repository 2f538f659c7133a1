use alloc::vec::Vec;

use crate::math;

/// `−ln(p[label] + 1e-9)`.
pub fn cross_entropy(probs: &[f32], label: usize) -> f64 {
    -math::ln(probs[label] as f64 + 1e-9)
}

/// Derivative of [`cross_entropy`] with respect to the probabilities.
pub fn cross_entropy_grad_probs(probs: &[f32], label: usize) -> Vec<f32> {
    let mut g = alloc::vec![0.0f32; probs.len()];
    g[label] = (-1.0 / (probs[label] as f64 + 1e-9)) as f32;
    g
}

/// Gradient of cross-entropy-of-softmax with respect to the logits,
/// `p − onehot(label)`.
pub fn softmax_cross_entropy_grad(probs: &[f32], label: usize) -> Vec<f32> {
    probs
        .iter()
        .enumerate()
        .map(|(i, &p)| if i == label { p - 1.0 } else { p })
        .collect()
}

/// Summed smooth-L1: `0.5·d²` inside `|d| < 1`, `|d| − 0.5` outside.
pub fn smooth_l1(pred: &[f32], target: &[f32]) -> f64 {
    pred.iter()
        .zip(target)
        .map(|(&p, &t)| {
            let d = (p - t) as f64;
            if d.abs() < 1.0 {
                0.5 * d * d
            } else {
                d.abs() - 0.5
            }
        })
        .sum()
}

pub fn smooth_l1_grad(pred: &[f32], target: &[f32]) -> Vec<f32> {
    pred.iter()
        .zip(target)
        .map(|(&p, &t)| {
            let d = p - t;
            if d.abs() < 1.0 {
                d
            } else {
                d.signum()
            }
        })
        .collect()
}
