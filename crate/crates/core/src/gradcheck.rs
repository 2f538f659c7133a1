//! Central finite-difference gradient checking.
//!
//! Independent of every backward kernel in [`crate::ops`]: it only evaluates
//! a scalar loss at perturbed inputs.
//!
//! The headline figure is the relative error of the whole gradient vector,
//! `‖a − n‖₂ / max(‖a‖₂, ‖n‖₂)`. Per-entry ratios are also reported, but in
//! float32 with `eps = 1e-3` individual entries carry rounding noise of
//! roughly `1e-4 · |output|`, so the vector norm is what the tolerances
//! apply to.

use alloc::vec::Vec;

use crate::math;
use crate::tensor::Tensor;

/// Outcome of comparing an analytic gradient with finite differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// Vector relative error over all checked entries.
    pub rel_err: f64,
    /// Largest per-entry `|a − n| / max(|a|, |n|, 1)`.
    pub max_entry_err: f64,
    /// Index of that entry.
    pub worst: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
    /// Entries left out because the loss returned NaN at a perturbed point.
    pub skipped: usize,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.rel_err < tol
    }

}

fn vector_rel(diff_sq: f64, a_sq: f64, n_sq: f64) -> f64 {
    let denom = math::sqrt(a_sq).max(math::sqrt(n_sq));
    if denom == 0.0 {
        0.0
    } else {
        math::sqrt(diff_sq) / denom
    }
}

/// Perturbs each entry of `x` listed in `indices` by `±eps`, evaluates
/// `loss`, and compares `(f(x+eps) − f(x−eps)) / 2eps` with `analytic`.
/// A NaN loss marks a perturbed point as unusable and the entry is skipped.
pub fn check_indices(
    x: &mut [f32],
    analytic: &[f32],
    indices: impl IntoIterator<Item = usize>,
    eps: f32,
    mut loss: impl FnMut(&[f32]) -> f64,
) -> GradCheck {
    let mut out = GradCheck {
        rel_err: 0.0,
        max_entry_err: 0.0,
        worst: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
        skipped: 0,
    };
    let (mut d_sq, mut a_sq, mut n_sq) = (0.0, 0.0, 0.0);
    for i in indices {
        let orig = x[i];
        x[i] = orig + eps;
        let up = loss(x);
        x[i] = orig - eps;
        let down = loss(x);
        x[i] = orig;
        if up.is_nan() || down.is_nan() {
            out.skipped += 1;
            continue;
        }
        // the perturbation actually representable in f32
        let h = ((orig + eps) as f64) - ((orig - eps) as f64);
        let numeric = (up - down) / h;
        let a = analytic[i] as f64;
        d_sq += (a - numeric) * (a - numeric);
        a_sq += a * a;
        n_sq += numeric * numeric;
        let e = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
        if e > out.max_entry_err || out.checked == 0 {
            out.max_entry_err = e;
            out.worst = i;
            out.analytic = a;
            out.numeric = numeric;
        }
        out.checked += 1;
    }
    out.rel_err = vector_rel(d_sq, a_sq, n_sq);
    out
}

/// [`check_indices`] over every entry.
pub fn check_all(
    x: &mut [f32],
    analytic: &[f32],
    eps: f32,
    loss: impl FnMut(&[f32]) -> f64,
) -> GradCheck {
    let n = x.len();
    check_indices(x, analytic, 0..n, eps, loss)
}

/// Which side of every piecewise-linear switch a forward pass took: ReLU
/// input signs and max-pool winners. Inputs with equal patterns lie in the
/// same smooth piece of the network function, so a finite difference whose
/// endpoints change the pattern straddles a kink.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ActivationPattern {
    active: Vec<bool>,
    winners: Vec<u32>,
}

impl ActivationPattern {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records which entries of a ReLU input are positive.
    pub fn relu(&mut self, pre: &Tensor) {
        self.active.extend(pre.data().iter().map(|&v| v > 0.0));
    }

    /// Records the argmax positions of a pooling op.
    pub fn winners(&mut self, argmax: &[u32]) {
        self.winners.extend_from_slice(argmax);
    }
}
