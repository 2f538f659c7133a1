use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::anchors::AnchorSet;
use super::bbox::apply_deltas;
use super::bbox::BBox;
use super::nms::{nms, score_order};
use crate::checkpoint::ModelParams;
use crate::error::{shape_err, Result};
use crate::ops::{conv2d, conv2d_backward, relu, relu_backward, Padding};
use crate::rng::{he_normal, normal_tensor, Rng};
use crate::tensor::Tensor;

/// Region proposal network: shared 3×3 conv + ReLU feeding two sibling
/// 1×1 convs. Channel `2a` of the classifier is the "object" logit of
/// anchor shape `a`, channel `2a + 1` the "background" logit; the regressor
/// holds `(tx, ty, tw, th)` of shape `a` in channels `4a..4a + 4`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rpn {
    pub conv_w: Tensor,
    pub conv_b: Tensor,
    pub cls_w: Tensor,
    pub cls_b: Tensor,
    pub reg_w: Tensor,
    pub reg_b: Tensor,
}

#[derive(Debug, Clone)]
pub struct RpnOutput {
    /// Object probability `[A, h, w]`.
    pub objectness: Tensor,
    /// Box deltas `[4A, h, w]`.
    pub deltas: Tensor,
    /// Raw classifier logits `[2A, h, w]`.
    pub logits: Tensor,
}

#[derive(Debug, Clone)]
pub struct RpnCache {
    features: Tensor,
    pre_relu: Tensor,
    hidden: Tensor,
}

impl RpnCache {
    pub fn record_pattern(&self, p: &mut crate::gradcheck::ActivationPattern) {
        p.relu(&self.pre_relu);
    }
}

const NAMES: [&str; 6] = [
    "rpn.conv.w",
    "rpn.conv.b",
    "rpn.cls.w",
    "rpn.cls.b",
    "rpn.reg.w",
    "rpn.reg.b",
];

impl Rpn {
    pub fn new(in_channels: usize, mid_channels: usize, anchors_per_cell: usize, rng: &mut Rng) -> Self {
        let a = anchors_per_cell;
        Self {
            conv_w: he_normal(&[mid_channels, in_channels, 3, 3], in_channels * 9, rng),
            conv_b: Tensor::zeros(&[mid_channels]),
            cls_w: normal_tensor(&[2 * a, mid_channels, 1, 1], 0.01, rng),
            cls_b: Tensor::zeros(&[2 * a]),
            reg_w: normal_tensor(&[4 * a, mid_channels, 1, 1], 0.01, rng),
            reg_b: Tensor::zeros(&[4 * a]),
        }
    }

    pub fn anchors_per_cell(&self) -> usize {
        self.cls_b.len() / 2
    }

    fn tensors(&self) -> [&Tensor; 6] {
        [&self.conv_w, &self.conv_b, &self.cls_w, &self.cls_b, &self.reg_w, &self.reg_b]
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor> {
        alloc::vec![
            &mut self.conv_w,
            &mut self.conv_b,
            &mut self.cls_w,
            &mut self.cls_b,
            &mut self.reg_w,
            &mut self.reg_b,
        ]
    }

    pub fn write_params(&self, params: &mut ModelParams) {
        for (name, t) in NAMES.iter().zip(self.tensors()) {
            let mut t = t.clone();
            t.clear_grad();
            params.insert(*name, t);
        }
    }

    pub fn from_params(params: &ModelParams, in_channels: usize, mid_channels: usize, a: usize) -> Result<Self> {
        let shapes: [&[usize]; 6] = [
            &[mid_channels, in_channels, 3, 3],
            &[mid_channels],
            &[2 * a, mid_channels, 1, 1],
            &[2 * a],
            &[4 * a, mid_channels, 1, 1],
            &[4 * a],
        ];
        let mut ts = Vec::with_capacity(6);
        for (name, shape) in NAMES.iter().zip(shapes) {
            let t = params.require(name)?;
            if t.shape() != shape {
                return Err(crate::Error::Params(alloc::format!(
                    "{name} has shape {:?}, config expects {shape:?}",
                    t.shape()
                )));
            }
            ts.push(t.clone());
        }
        let mut it = ts.into_iter();
        let mut next = || it.next().expect("six tensors");
        Ok(Self {
            conv_w: next(),
            conv_b: next(),
            cls_w: next(),
            cls_b: next(),
            reg_w: next(),
            reg_b: next(),
        })
    }

    pub fn forward(&self, features: &Tensor) -> Result<(RpnOutput, RpnCache)> {
        let pre_relu = conv2d(features, &self.conv_w, &self.conv_b, 1, Padding::Same)?;
        let hidden = relu(&pre_relu);
        let logits = conv2d(&hidden, &self.cls_w, &self.cls_b, 1, Padding::Same)?;
        let deltas = conv2d(&hidden, &self.reg_w, &self.reg_b, 1, Padding::Same)?;
        let (_, h, w) = logits.dims3()?;
        let a = self.anchors_per_cell();
        let n = h * w;
        let l = logits.data();
        let mut obj = alloc::vec![0.0f32; a * n];
        for k in 0..a {
            for p in 0..n {
                let (lo, lb) = (l[2 * k * n + p], l[(2 * k + 1) * n + p]);
                // two-way softmax written as a logistic of the logit gap
                obj[k * n + p] = 1.0 / (1.0 + crate::math::expf(lb - lo));
            }
        }
        let objectness = Tensor::new(&[a, h, w], obj)?;
        objectness.ensure_finite("rpn")?;
        deltas.ensure_finite("rpn")?;
        Ok((
            RpnOutput {
                objectness,
                deltas,
                logits,
            },
            RpnCache {
                features: features.clone(),
                pre_relu,
                hidden,
            },
        ))
    }

    /// Accumulates parameter gradients from logit and delta gradients and
    /// returns the feature gradient.
    pub fn backward(&mut self, cache: &RpnCache, grad_logits: &Tensor, grad_deltas: &Tensor) -> Result<Tensor> {
        let gc = conv2d_backward(&cache.hidden, &self.cls_w, 1, Padding::Same, grad_logits)?;
        let gr = conv2d_backward(&cache.hidden, &self.reg_w, 1, Padding::Same, grad_deltas)?;
        self.cls_w.accumulate_grad(gc.dw.data());
        self.cls_b.accumulate_grad(gc.db.data());
        self.reg_w.accumulate_grad(gr.dw.data());
        self.reg_b.accumulate_grad(gr.db.data());
        let dh: Vec<f32> = gc.dx.data().iter().zip(gr.dx.data()).map(|(a, b)| a + b).collect();
        let dh = Tensor::new(cache.hidden.shape(), dh)?;
        let dpre = relu_backward(&cache.pre_relu, &dh)?;
        let g = conv2d_backward(&cache.features, &self.conv_w, 1, Padding::Same, &dpre)?;
        self.conv_w.accumulate_grad(g.dw.data());
        self.conv_b.accumulate_grad(g.db.data());
        Ok(g.dx)
    }
}

/// Per-anchor view of RPN outputs in [`AnchorSet`] order.
pub fn anchor_scores_and_deltas(out: &RpnOutput, anchors: &AnchorSet) -> Result<(Vec<f32>, Vec<[f64; 4]>)> {
    let (a, h, w) = out.objectness.dims3()?;
    if a != anchors.per_cell || h != anchors.feat_h || w != anchors.feat_w {
        return Err(shape_err!(
            "rpn output {:?} does not match {}x{}x{} anchors",
            out.objectness.shape(),
            anchors.per_cell,
            anchors.feat_h,
            anchors.feat_w
        ));
    }
    let n = h * w;
    let (o, d) = (out.objectness.data(), out.deltas.data());
    let mut scores = Vec::with_capacity(anchors.len());
    let mut deltas = Vec::with_capacity(anchors.len());
    for k in 0..anchors.len() {
        let (s, i, j) = anchors.unravel(k);
        let p = i * w + j;
        scores.push(o[s * n + p]);
        deltas.push(core::array::from_fn(|c| d[(4 * s + c) * n + p] as f64));
    }
    Ok((scores, deltas))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProposalConfig {
    pub pre_nms_n: usize,
    pub post_nms_train: usize,
    pub post_nms_infer: usize,
    pub nms_thresh: f64,
    /// Minimum side length in pixels.
    pub min_size: f64,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        Self {
            pre_nms_n: 2000,
            post_nms_train: 300,
            post_nms_infer: 100,
            nms_thresh: 0.7,
            min_size: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    pub bbox: BBox,
    pub score: f32,
    pub anchor: usize,
}

/// Decode → clip → size filter → top `pre_nms_n` → NMS → top `post_nms_n`.
pub fn propose(
    out: &RpnOutput,
    anchors: &AnchorSet,
    pre_nms_n: usize,
    post_nms_n: usize,
    nms_thresh: f64,
    min_size: f64,
) -> Result<Vec<Proposal>> {
    let (scores, deltas) = anchor_scores_and_deltas(out, anchors)?;
    let (iw, ih) = anchors.image_size();
    let mut cands = Vec::new();
    for k in 0..anchors.len() {
        let b = apply_deltas(&anchors.boxes[k], deltas[k]).clip(iw, ih);
        if b.width() >= min_size && b.height() >= min_size && b.is_valid() {
            cands.push(Proposal {
                bbox: b,
                score: scores[k],
                anchor: k,
            });
        }
    }
    let cs: Vec<f32> = cands.iter().map(|c| c.score).collect();
    let top: Vec<Proposal> = score_order(&cs).into_iter().take(pre_nms_n).map(|i| cands[i]).collect();
    let boxes: Vec<BBox> = top.iter().map(|p| p.bbox).collect();
    let ts: Vec<f32> = top.iter().map(|p| p.score).collect();
    Ok(nms(&boxes, &ts, nms_thresh)
        .into_iter()
        .take(post_nms_n)
        .map(|i| top[i])
        .collect())
}
