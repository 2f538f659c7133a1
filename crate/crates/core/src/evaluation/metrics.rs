use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::roc::roc_auc;
use crate::detector::{iou, score_order, Annotation, Class, Detection};

/// Overlap thresholds of the detection table.
pub const THRESHOLDS: [f64; 4] = [1.0, 0.75, 0.5, 0.25];
/// Matching threshold used for the confusion metrics and ROC.
pub const DEFAULT_THRESHOLD: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub det: usize,
    pub gt: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchPair>,
    pub unmatched_gt: Vec<usize>,
    pub unmatched_det: Vec<usize>,
    pub threshold: f64,
}

/// Greedy one-to-one matching: detections in descending score order each
/// take the unmatched ground truth of highest IoU, provided IoU ≥ `t`
/// (ties go to the lower ground-truth index).
pub fn match_detections(dets: &[Detection], gts: &[Annotation], t: f64) -> MatchResult {
    let scores: Vec<f32> = dets.iter().map(|d| d.score).collect();
    let mut taken = alloc::vec![false; gts.len()];
    let mut pairs = Vec::new();
    let mut unmatched_det = Vec::new();
    for d in score_order(&scores) {
        let mut best: Option<(usize, f64)> = None;
        for (g, a) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let v = iou(&dets[d].bbox, &a.bbox);
            if v > 0.0 && v >= t && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        match best {
            Some((g, v)) => {
                taken[g] = true;
                pairs.push(MatchPair { det: d, gt: g, iou: v });
            }
            None => unmatched_det.push(d),
        }
    }
    unmatched_det.sort_unstable();
    MatchResult {
        pairs,
        unmatched_gt: (0..gts.len()).filter(|&g| !taken[g]).collect(),
        unmatched_det,
        threshold: t,
    }
}

/// Detections and ground truth of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageResult {
    pub id: alloc::string::String,
    pub detections: Vec<Detection>,
    pub ground_truth: Vec<Annotation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IouRow {
    pub threshold: f64,
    /// Fraction of ground truths matched; `None` without ground truth.
    pub detection_rate: Option<f64>,
    /// Mean IoU of matched pairs; `None` without matches.
    pub mean_iou: Option<f64>,
    pub matched: usize,
    pub total_gt: usize,
}

pub fn detection_table(images: &[ImageResult], thresholds: &[f64]) -> Vec<IouRow> {
    let total_gt: usize = images.iter().map(|r| r.ground_truth.len()).sum();
    thresholds
        .iter()
        .map(|&t| {
            let (mut matched, mut iou_sum) = (0usize, 0.0);
            for r in images {
                let m = match_detections(&r.detections, &r.ground_truth, t);
                matched += m.pairs.len();
                iou_sum += m.pairs.iter().map(|p| p.iou).sum::<f64>();
            }
            IouRow {
                threshold: t,
                detection_rate: (total_gt > 0).then(|| matched as f64 / total_gt as f64),
                mean_iou: (matched > 0).then(|| iou_sum / matched as f64),
                matched,
                total_gt,
            }
        })
        .collect()
}

/// Counts with malignant as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    /// Adds one image: matched pairs by predicted vs true class; a missed
    /// malignant mass is a false negative, a missed benign mass and every
    /// unmatched detection are false positives.
    pub fn add(&mut self, m: &MatchResult, dets: &[Detection], gts: &[Annotation]) {
        for p in &m.pairs {
            match (gts[p.gt].class, dets[p.det].class) {
                (Class::Malignant, Class::Malignant) => self.tp += 1,
                (Class::Malignant, Class::Benign) => self.fn_ += 1,
                (Class::Benign, Class::Benign) => self.tn += 1,
                (Class::Benign, Class::Malignant) => self.fp += 1,
            }
        }
        for &g in &m.unmatched_gt {
            match gts[g].class {
                Class::Malignant => self.fn_ += 1,
                Class::Benign => self.fp += 1,
            }
        }
        self.fp += m.unmatched_det.len();
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Standard ratios; `None` where the denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
}

fn ratio(a: usize, b: usize) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

pub fn confusion_metrics(c: &Confusion) -> ClassMetrics {
    ClassMetrics {
        accuracy: ratio(c.tp + c.tn, c.total()),
        sensitivity: ratio(c.tp, c.tp + c.fn_),
        specificity: ratio(c.tn, c.tn + c.fp),
        precision: ratio(c.tp, c.tp + c.fp),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub threshold: f64,
    pub n_images: usize,
    pub n_ground_truth: usize,
    pub n_detections: usize,
    pub confusion: Confusion,
    pub metrics: ClassMetrics,
    /// Share of matched pairs whose predicted class is correct.
    pub matched_class_accuracy: Option<f64>,
    pub auc: Option<f64>,
    pub roc_points: Vec<(f64, f64)>,
    pub iou_table: Vec<IouRow>,
}

/// Full evaluation at matching threshold `t`. ROC scores are the malignant
/// probabilities of matched detections, labelled by the matched ground
/// truth's class.
pub fn evaluate(images: &[ImageResult], t: f64) -> MetricsReport {
    let mut confusion = Confusion::default();
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    let mut correct = 0usize;
    let mut pairs = 0usize;
    for r in images {
        let m = match_detections(&r.detections, &r.ground_truth, t);
        confusion.add(&m, &r.detections, &r.ground_truth);
        for p in &m.pairs {
            let d = &r.detections[p.det];
            let g = &r.ground_truth[p.gt];
            scores.push(d.malignant_prob as f64);
            labels.push(g.class == Class::Malignant);
            pairs += 1;
            if d.class == g.class {
                correct += 1;
            }
        }
    }
    let roc = roc_auc(&scores, &labels);
    MetricsReport {
        threshold: t,
        n_images: images.len(),
        n_ground_truth: images.iter().map(|r| r.ground_truth.len()).sum(),
        n_detections: images.iter().map(|r| r.detections.len()).sum(),
        confusion,
        metrics: confusion_metrics(&confusion),
        matched_class_accuracy: ratio(correct, pairs),
        auc: roc.auc,
        roc_points: roc.points,
        iou_table: detection_table(images, &THRESHOLDS),
    }
}
