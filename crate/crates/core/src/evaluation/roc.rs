use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`, one point per distinct score.
    pub points: Vec<(f64, f64)>,
    /// `None` when either class is absent.
    pub auc: Option<f64>,
}

/// ROC curve over all distinct score thresholds with trapezoidal area.
/// Equal scores form a single step, so ties contribute half credit.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> RocCurve {
    assert_eq!(scores.len(), labels.len(), "roc scores and labels differ in length");
    let p = labels.iter().filter(|&&l| l).count();
    let n = labels.len() - p;
    if p == 0 || n == 0 {
        return RocCurve {
            points: Vec::new(),
            auc: None,
        };
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let s = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == s {
            if labels[idx[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let pt = (fp as f64 / n as f64, tp as f64 / p as f64);
        let prev = *points.last().expect("starts with the origin");
        auc += (pt.0 - prev.0) * (pt.1 + prev.1) / 2.0;
        points.push(pt);
    }
    RocCurve {
        points,
        auc: Some(auc.clamp(0.0, 1.0)),
    }
}
