//! Anchors, region proposals, ROI pooling and the classification head.

mod anchors;
mod bbox;
mod head;
mod nms;
mod roi;
mod rpn;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use anchors::{generate_anchors, AnchorConfig, AnchorSet};
pub use bbox::{apply_deltas, encode_deltas, iou, BBox, MAX_LOG_SCALE};
pub use head::{Head, HeadCache, HeadConfig, HeadOutput, NUM_CLASSES};
pub use nms::{nms, score_order};
pub use roi::{roi_pool, roi_pool_backward, RoiPoolIndices};
pub use rpn::{anchor_scores_and_deltas, propose, Proposal, ProposalConfig, Rpn, RpnCache, RpnOutput};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::imgproc::Preprocessor;
use crate::model::{image_tensor, Model};
use crate::rng;
use crate::Mode;

/// Mass class. Head output index 0 is background.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    Benign,
    Malignant,
}

impl Class {
    pub const ALL: [Class; 2] = [Class::Benign, Class::Malignant];

    /// Column in the head output.
    pub fn index(self) -> usize {
        match self {
            Class::Benign => 1,
            Class::Malignant => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            1 => Some(Class::Benign),
            2 => Some(Class::Malignant),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Class::Benign => "benign",
            Class::Malignant => "malignant",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "benign" => Ok(Class::Benign),
            "malignant" => Ok(Class::Malignant),
            other => Err(Error::UnknownLabel(other.into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub class: Class,
    /// Head probability of `class`.
    pub score: f32,
    /// Head probability of the malignant class, used for ROC analysis.
    pub malignant_prob: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub anchors: AnchorConfig,
    /// Channels of the shared RPN convolution.
    pub rpn_channels: usize,
    pub proposals: ProposalConfig,
    pub head: HeadConfig,
    pub score_thresh: f32,
    /// Per-class NMS threshold on final detections.
    pub nms_thresh: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            anchors: AnchorConfig::default(),
            rpn_channels: 512,
            proposals: ProposalConfig::default(),
            head: HeadConfig::default(),
            score_thresh: 0.5,
            nms_thresh: 0.3,
        }
    }
}

/// Head scoring of a set of ROIs on one feature map: class probabilities
/// and class-specific decoded boxes clipped to `(w, h)`.
pub fn score_rois(
    model: &Model,
    features: &crate::Tensor,
    rois: &[BBox],
    w: f64,
    h: f64,
) -> Result<Vec<(BBox, [f32; NUM_CLASSES], [BBox; NUM_CLASSES])>> {
    if rois.is_empty() {
        return Ok(Vec::new());
    }
    let stride = model.stride();
    let p = model.head.config.pool_size;
    let mut rows = Vec::with_capacity(rois.len() * model.head.in_features());
    for r in rois {
        rows.extend_from_slice(roi_pool(features, r, stride, p)?.0.data());
    }
    let x = crate::Tensor::new(&[rois.len(), model.head.in_features()], rows)?;
    // infer mode draws no randomness
    let (out, _) = model.head.forward(&x, Mode::Infer, &mut rng::from_seed(0))?;
    let mut res = Vec::with_capacity(rois.len());
    for (k, r) in rois.iter().enumerate() {
        let pr = &out.probs.data()[k * NUM_CLASSES..(k + 1) * NUM_CLASSES];
        let d = &out.deltas.data()[k * 4 * NUM_CLASSES..(k + 1) * 4 * NUM_CLASSES];
        let boxes = core::array::from_fn(|c| {
            apply_deltas(r, core::array::from_fn(|i| d[4 * c + i] as f64)).clip(w, h)
        });
        res.push((*r, [pr[0], pr[1], pr[2]], boxes));
    }
    Ok(res)
}

/// Detections on an image already at the network input size.
pub fn detect_prepared(model: &Model, x: &GrayImage, cfg: &DetectorConfig) -> Result<Vec<Detection>> {
    let input = image_tensor(x);
    let feats = model.backbone.forward_infer(&input)?;
    let (_, fh, fw) = feats.dims3()?;
    let anchors = generate_anchors(fh, fw, &cfg.anchors);
    let (out, _) = model.rpn.forward(&feats)?;
    let pc = &cfg.proposals;
    let props = propose(&out, &anchors, pc.pre_nms_n, pc.post_nms_infer, pc.nms_thresh, pc.min_size)?;
    let rois: Vec<BBox> = props.iter().map(|p| p.bbox).collect();
    let (w, h) = (x.width() as f64, x.height() as f64);
    let mut per_class: [Vec<Detection>; NUM_CLASSES] = Default::default();
    for (_, probs, boxes) in score_rois(model, &feats, &rois, w, h)? {
        let best = (0..NUM_CLASSES).fold(0, |b, c| if probs[c] > probs[b] { c } else { b });
        let Some(class) = Class::from_index(best) else { continue };
        let bbox = boxes[best];
        if probs[best] < cfg.score_thresh || !bbox.is_valid() {
            continue;
        }
        per_class[best].push(Detection {
            bbox,
            class,
            score: probs[best],
            malignant_prob: probs[Class::Malignant.index()],
        });
    }
    let mut dets = Vec::new();
    for list in &per_class {
        let boxes: Vec<BBox> = list.iter().map(|d| d.bbox).collect();
        let scores: Vec<f32> = list.iter().map(|d| d.score).collect();
        dets.extend(nms(&boxes, &scores, cfg.nms_thresh).into_iter().map(|i| list[i]));
    }
    let scores: Vec<f32> = dets.iter().map(|d| d.score).collect();
    Ok(score_order(&scores).into_iter().map(|i| dets[i]).collect())
}

/// Full detection on a raw image: preprocess (letterboxed to the model
/// input size), run the network, and map the boxes back to the original
/// image. An image without foreground tissue
/// yields no detections.
pub fn detect(img: &GrayImage, model: &Model, pre: &Preprocessor, cfg: &DetectorConfig) -> Result<Vec<Detection>> {
    let (ih, iw) = model.config.backbone.input_size;
    let mut pcfg = pre.config.clone();
    pcfg.target = Some((iw, ih));
    let prepared = match Preprocessor::new(pcfg).run(img) {
        Ok(p) => p,
        Err(Error::NoForeground) => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let (w, h) = (img.width() as f64, img.height() as f64);
    let mut out = Vec::new();
    for mut d in detect_prepared(model, &prepared.image, cfg)? {
        d.bbox = BBox::from_array(prepared.box_to_source(d.bbox.to_array())).clip(w, h);
        if d.bbox.is_valid() {
            out.push(d);
        }
    }
    Ok(out)
}

/// Ground-truth mass: box and class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub bbox: BBox,
    pub class: Class,
}
