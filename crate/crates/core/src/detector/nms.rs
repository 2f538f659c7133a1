use alloc::vec::Vec;

use super::bbox::{iou, BBox};

/// Indices ordered by descending score; equal scores keep the lower index
/// first. NaN scores sort last.
pub fn score_order(scores: &[f32]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        let (sa, sb) = (scores[a], scores[b]);
        match (sa.is_nan(), sb.is_nan()) {
            (true, true) => a.cmp(&b),
            (true, false) => core::cmp::Ordering::Greater,
            (false, true) => core::cmp::Ordering::Less,
            _ => sb.partial_cmp(&sa).unwrap().then(a.cmp(&b)),
        }
    });
    idx
}

/// Greedy non-maximum suppression. Returns kept indices by descending
/// score; a box is suppressed when its IoU with a kept box exceeds
/// `iou_thresh`.
pub fn nms(boxes: &[BBox], scores: &[f32], iou_thresh: f64) -> Vec<usize> {
    assert_eq!(boxes.len(), scores.len(), "nms boxes and scores differ in length");
    let mut kept: Vec<usize> = Vec::new();
    for i in score_order(scores) {
        if kept.iter().all(|&k| iou(&boxes[k], &boxes[i]) <= iou_thresh) {
            kept.push(i);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x: f64) -> BBox {
        BBox::new(x, 0.0, x + 10.0, 10.0).unwrap()
    }

    #[test]
    fn nms_examples() {
        assert_eq!(nms(&[b(0.0)], &[0.3], 0.5), std::vec![0]);
        assert_eq!(nms(&[b(0.0), b(0.0)], &[0.3, 0.9], 0.5), std::vec![1]);
        assert_eq!(nms(&[b(0.0), b(0.0)], &[0.5, 0.5], 0.5), std::vec![0]);
        assert_eq!(nms(&[b(0.0), b(20.0), b(40.0)], &[0.1, 0.3, 0.2], 0.5), std::vec![1, 2, 0]);
    }
}
