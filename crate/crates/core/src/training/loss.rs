use alloc::vec;

use super::targets::{AnchorLabel, HeadTarget, RpnTargets};
use crate::detector::{AnchorSet, HeadOutput, RpnOutput, NUM_CLASSES};
use crate::error::{shape_err, Result};
use crate::ops::{cross_entropy, smooth_l1, smooth_l1_grad, softmax_cross_entropy_grad};
use crate::tensor::Tensor;

/// A two-part detection loss with gradients on the raw network outputs.
#[derive(Debug, Clone)]
pub struct LossParts {
    /// Mean cross-entropy over sampled items.
    pub cls: f64,
    /// Summed smooth-L1 over positive items divided by their count.
    pub reg: f64,
    pub n_sampled: usize,
    pub n_pos: usize,
    /// No item was sampled; both terms are 0.
    pub empty: bool,
    pub grad_logits: Tensor,
    pub grad_deltas: Tensor,
}

impl LossParts {
    /// `cls + λ·reg` with `λ = 1`.
    pub fn total(&self) -> f64 {
        self.cls + self.reg
    }
}

/// RPN loss over the sampled anchors of `targets`. Gradients are with
/// respect to the `[2A, h, w]` logits and `[4A, h, w]` deltas.
pub fn rpn_loss(out: &RpnOutput, anchors: &AnchorSet, targets: &RpnTargets) -> Result<LossParts> {
    let (a, h, w) = out.objectness.dims3()?;
    if targets.labels.len() != anchors.len() || anchors.len() != a * h * w {
        return Err(shape_err!("rpn targets do not match the output grid"));
    }
    let n = h * w;
    let n_sampled = targets.labels.iter().filter(|&&l| l != AnchorLabel::Ignore).count();
    let n_pos = targets.count(AnchorLabel::Positive);
    let mut gl = vec![0.0f32; 2 * a * n];
    let mut gd = vec![0.0f32; 4 * a * n];
    let (obj, del) = (out.objectness.data(), out.deltas.data());
    let (mut cls, mut reg) = (0.0, 0.0);
    let inv_s = 1.0 / n_sampled.max(1) as f32;
    let inv_p = 1.0 / n_pos.max(1) as f32;
    for (k, &label) in targets.labels.iter().enumerate() {
        if label == AnchorLabel::Ignore {
            continue;
        }
        let (s, i, j) = anchors.unravel(k);
        let p = i * w + j;
        let po = obj[s * n + p];
        let probs = [po, 1.0 - po];
        let y = if label == AnchorLabel::Positive { 0 } else { 1 };
        cls += cross_entropy(&probs, y);
        let g = softmax_cross_entropy_grad(&probs, y);
        gl[2 * s * n + p] = g[0] * inv_s;
        gl[(2 * s + 1) * n + p] = g[1] * inv_s;
        if label == AnchorLabel::Positive {
            let pred: [f32; 4] = core::array::from_fn(|c| del[(4 * s + c) * n + p]);
            reg += smooth_l1(&pred, &targets.deltas[k]);
            for (c, gv) in smooth_l1_grad(&pred, &targets.deltas[k]).into_iter().enumerate() {
                gd[(4 * s + c) * n + p] = gv * inv_p;
            }
        }
    }
    Ok(LossParts {
        cls: cls / n_sampled.max(1) as f64,
        reg: reg / n_pos.max(1) as f64,
        n_sampled,
        n_pos,
        empty: n_sampled == 0,
        grad_logits: Tensor::new(&[2 * a, h, w], gl)?,
        grad_deltas: Tensor::new(&[4 * a, h, w], gd)?,
    })
}

/// Head loss over ROI targets (row `r` of `out` belongs to `targets[r]`).
/// Gradients are with respect to the `[R, 3]` logits and `[R, 12]` deltas.
pub fn head_loss(out: &HeadOutput, targets: &[HeadTarget]) -> Result<LossParts> {
    let r = targets.len();
    if out.probs.shape() != [r, NUM_CLASSES] || out.deltas.shape() != [r, 4 * NUM_CLASSES] {
        return Err(shape_err!("head output {:?} does not match {r} targets", out.probs.shape()));
    }
    let n_pos = targets.iter().filter(|t| t.label != 0).count();
    let mut gl = vec![0.0f32; r * NUM_CLASSES];
    let mut gd = vec![0.0f32; r * 4 * NUM_CLASSES];
    let (mut cls, mut reg) = (0.0, 0.0);
    let inv_s = 1.0 / r.max(1) as f32;
    let inv_p = 1.0 / n_pos.max(1) as f32;
    for (i, t) in targets.iter().enumerate() {
        let probs = &out.probs.data()[i * NUM_CLASSES..(i + 1) * NUM_CLASSES];
        cls += cross_entropy(probs, t.label);
        for (c, g) in softmax_cross_entropy_grad(probs, t.label).into_iter().enumerate() {
            gl[i * NUM_CLASSES + c] = g * inv_s;
        }
        if t.label != 0 {
            let off = i * 4 * NUM_CLASSES + 4 * t.label;
            let pred = &out.deltas.data()[off..off + 4];
            reg += smooth_l1(pred, &t.deltas);
            for (c, g) in smooth_l1_grad(pred, &t.deltas).into_iter().enumerate() {
                gd[off + c] = g * inv_p;
            }
        }
    }
    Ok(LossParts {
        cls: cls / r.max(1) as f64,
        reg: reg / n_pos.max(1) as f64,
        n_sampled: r,
        n_pos,
        empty: r == 0,
        grad_logits: Tensor::new(&[r, NUM_CLASSES], gl)?,
        grad_deltas: Tensor::new(&[r, 4 * NUM_CLASSES], gd)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{generate_anchors, AnchorConfig};

    fn one_cell() -> AnchorSet {
        let cfg = AnchorConfig {
            scales: std::vec![32.0],
            ratios: std::vec![[1.0, 1.0], [1.0, 1.0]],
            stride: 16,
        };
        generate_anchors(1, 1, &cfg)
    }

    fn output(p: [f32; 2], d: [f32; 8]) -> RpnOutput {
        RpnOutput {
            objectness: Tensor::new(&[2, 1, 1], p.to_vec()).unwrap(),
            deltas: Tensor::new(&[8, 1, 1], d.to_vec()).unwrap(),
            logits: Tensor::zeros(&[4, 1, 1]),
        }
    }

    #[test]
    fn hand_computed_two_anchor_loss() {
        let a = one_cell();
        let t = RpnTargets {
            labels: std::vec![AnchorLabel::Positive, AnchorLabel::Negative],
            deltas: std::vec![[0.5, 0.0, 2.0, 0.0], [0.0; 4]],
            matched: std::vec![Some(0), None],
        };
        let out = output([0.8, 0.25], [0.0, 0.0, 0.0, 0.0, 9.0, 9.0, 9.0, 9.0]);
        let l = rpn_loss(&out, &a, &t).unwrap();
        // cls: (−ln 0.8 − ln 0.75) / 2; reg: 0.5·0.25 + (2 − 0.5) = 1.625
        let cls = (-(0.8f64.ln()) - 0.75f64.ln()) / 2.0;
        assert!((l.cls - cls).abs() < 1e-6, "{}", l.cls);
        assert!((l.reg - 1.625).abs() < 1e-6);
        assert_eq!((l.n_sampled, l.n_pos), (2, 1));
    }

    #[test]
    fn perfect_deltas_and_empty_batch() {
        let a = one_cell();
        let t = RpnTargets {
            labels: std::vec![AnchorLabel::Positive, AnchorLabel::Ignore],
            deltas: std::vec![[0.1, -0.2, 0.3, 0.0], [0.0; 4]],
            matched: std::vec![Some(0), None],
        };
        let l = rpn_loss(&output([0.9, 0.5], [0.1, -0.2, 0.3, 0.0, 0.0, 0.0, 0.0, 0.0]), &a, &t).unwrap();
        assert_eq!(l.reg, 0.0);
        let none = RpnTargets {
            labels: std::vec![AnchorLabel::Ignore; 2],
            ..t
        };
        let l = rpn_loss(&output([0.9, 0.5], [0.0; 8]), &a, &none).unwrap();
        assert!(l.empty);
        assert_eq!(l.total(), 0.0);
    }
}
