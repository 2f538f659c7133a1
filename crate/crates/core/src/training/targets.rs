use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::detector::{encode_deltas, iou, Annotation, AnchorSet, BBox};
use crate::error::{arg_err, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnchorLabel {
    Positive,
    Negative,
    Ignore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RpnTargets {
    pub labels: Vec<AnchorLabel>,
    /// Regression target of each positive anchor (zero elsewhere).
    pub deltas: Vec<[f32; 4]>,
    /// Ground truth each positive anchor regresses toward.
    pub matched: Vec<Option<usize>>,
}

impl RpnTargets {
    pub fn count(&self, l: AnchorLabel) -> usize {
        self.labels.iter().filter(|&&x| x == l).count()
    }
}

/// Keeps at most `n` of `preferred ++ rest`, taking `preferred` first; each
/// group is shuffled with `rng`. Returns `(kept, dropped)`.
fn subsample(mut preferred: Vec<usize>, mut rest: Vec<usize>, n: usize, rng: &mut Rng) -> (Vec<usize>, Vec<usize>) {
    preferred.shuffle(rng);
    rest.shuffle(rng);
    preferred.extend(rest);
    let dropped = if preferred.len() > n { preferred.split_off(n) } else { Vec::new() };
    (preferred, dropped)
}

/// Anchor labelling for RPN training.
///
/// Positive: IoU ≥ `pos_iou` with some ground truth, or the best anchor of
/// some ground truth. Negative: best IoU ≤ `neg_iou`. Anchors crossing the
/// image boundary are ignored unless one is the only overlapping anchor of
/// a ground truth. The result is subsampled to `batch` anchors with at most
/// `fg_fraction · batch` positives; best-of-ground-truth anchors survive the
/// subsampling first.
pub fn assign_rpn_targets(
    anchors: &AnchorSet,
    gts: &[BBox],
    pos_iou: f64,
    neg_iou: f64,
    batch: usize,
    fg_fraction: f64,
    rng: &mut Rng,
) -> Result<RpnTargets> {
    if !(0.0 <= neg_iou && neg_iou < pos_iou && pos_iou <= 1.0) {
        return Err(arg_err!("need 0 <= neg_iou < pos_iou <= 1, got {neg_iou}, {pos_iou}"));
    }
    if !(fg_fraction > 0.0 && fg_fraction < 1.0) {
        return Err(arg_err!("fg_fraction {fg_fraction} outside (0, 1)"));
    }
    let n = anchors.len();
    let inside: Vec<bool> = (0..n).map(|k| !anchors.crosses_boundary(k)).collect();
    let ious: Vec<Vec<f64>> = anchors.boxes.iter().map(|a| gts.iter().map(|g| iou(a, g)).collect()).collect();
    let mut labels = vec![AnchorLabel::Ignore; n];
    let mut matched = vec![None; n];
    for k in 0..n {
        let (mut best, mut arg) = (0.0, None);
        for (g, &v) in ious[k].iter().enumerate() {
            if v > best {
                best = v;
                arg = Some(g);
            }
        }
        matched[k] = arg;
        if !inside[k] {
            continue;
        }
        if best >= pos_iou {
            labels[k] = AnchorLabel::Positive;
        } else if best <= neg_iou {
            labels[k] = AnchorLabel::Negative;
        }
    }
    let mut forced = Vec::new();
    for g in 0..gts.len() {
        let best_in = (0..n).filter(|&k| inside[k]).map(|k| ious[k][g]).fold(0.0, f64::max);
        let (best, pool_all) = if best_in > 0.0 {
            (best_in, false)
        } else {
            ((0..n).map(|k| ious[k][g]).fold(0.0, f64::max), true)
        };
        if best <= 0.0 {
            continue;
        }
        for k in 0..n {
            if (pool_all || inside[k]) && ious[k][g] == best {
                labels[k] = AnchorLabel::Positive;
                if ious[k][g] >= ious[k][matched[k].unwrap_or(g)] {
                    matched[k] = Some(g);
                }
                if !forced.contains(&k) {
                    forced.push(k);
                }
            }
        }
    }
    let max_pos = (fg_fraction * batch as f64) as usize;
    let others: Vec<usize> = (0..n)
        .filter(|&k| labels[k] == AnchorLabel::Positive && !forced.contains(&k))
        .collect();
    let (pos, dropped) = subsample(forced, others, max_pos, rng);
    for k in dropped {
        labels[k] = AnchorLabel::Ignore;
    }
    let negs: Vec<usize> = (0..n).filter(|&k| labels[k] == AnchorLabel::Negative).collect();
    let (_, dropped) = subsample(Vec::new(), negs, batch.saturating_sub(pos.len()), rng);
    for k in dropped {
        labels[k] = AnchorLabel::Ignore;
    }
    let mut deltas = vec![[0.0f32; 4]; n];
    for &k in &pos {
        let g = matched[k].expect("positive anchors overlap a ground truth");
        let d = encode_deltas(&anchors.boxes[k], &gts[g]);
        deltas[k] = d.map(|v| v as f32);
    }
    for k in 0..n {
        if labels[k] != AnchorLabel::Positive {
            matched[k] = None;
        }
    }
    Ok(RpnTargets {
        labels,
        deltas,
        matched,
    })
}

/// Training target of one ROI for the classification head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadTarget {
    pub roi: BBox,
    /// 0 background, otherwise [`crate::detector::Class::index`].
    pub label: usize,
    /// Regression target toward the matched ground truth (zero for
    /// background).
    pub deltas: [f32; 4],
}

/// Labels proposals (plus the ground-truth boxes themselves when
/// `include_gt`) as foreground when IoU ≥ `fg_iou`, background when the best
/// IoU lies in `[bg_lo, bg_hi)`, and discards the rest. Samples at most
/// `batch` ROIs with at most `fg_fraction · batch` foreground.
#[allow(clippy::too_many_arguments)]
pub fn assign_head_targets(
    proposals: &[BBox],
    gts: &[Annotation],
    fg_iou: f64,
    bg_range: (f64, f64),
    batch: usize,
    fg_fraction: f64,
    include_gt: bool,
    rng: &mut Rng,
) -> Vec<HeadTarget> {
    let mut rois: Vec<BBox> = proposals.to_vec();
    let first_gt = rois.len();
    if include_gt {
        rois.extend(gts.iter().map(|a| a.bbox));
    }
    let mut fg = Vec::new();
    let mut gt_rois = Vec::new();
    let mut bg = Vec::new();
    let mut targets = Vec::with_capacity(rois.len());
    for (r, roi) in rois.iter().enumerate() {
        let (mut best, mut arg) = (0.0, None);
        for (g, a) in gts.iter().enumerate() {
            let v = iou(roi, &a.bbox);
            if v > best {
                best = v;
                arg = Some(g);
            }
        }
        let t = match arg {
            Some(g) if best >= fg_iou => {
                if r >= first_gt {
                    gt_rois.push(r);
                } else {
                    fg.push(r);
                }
                HeadTarget {
                    roi: *roi,
                    label: gts[g].class.index(),
                    deltas: encode_deltas(roi, &gts[g].bbox).map(|v| v as f32),
                }
            }
            _ if best >= bg_range.0 && best < bg_range.1 => {
                bg.push(r);
                HeadTarget {
                    roi: *roi,
                    label: 0,
                    deltas: [0.0; 4],
                }
            }
            _ => HeadTarget {
                roi: *roi,
                label: usize::MAX,
                deltas: [0.0; 4],
            },
        };
        targets.push(t);
    }
    let max_fg = ((fg_fraction * batch as f64) as usize).max(1);
    let (fg, _) = subsample(gt_rois, fg, max_fg, rng);
    let (bg, _) = subsample(Vec::new(), bg, batch.saturating_sub(fg.len()), rng);
    fg.into_iter().chain(bg).map(|r| targets[r]).collect()
}
