use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::bbox::BBox;
use crate::error::{arg_err, Result};

const SQRT2: f64 = core::f64::consts::SQRT_2;

/// Anchor scales (pixels) and `(width, height)` ratio multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnchorConfig {
    pub scales: Vec<f64>,
    pub ratios: Vec<[f64; 2]>,
    pub stride: usize,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        Self {
            scales: alloc::vec![32.0, 64.0, 128.0],
            ratios: alloc::vec![[1.0, 1.0], [1.0 / SQRT2, 2.0 / SQRT2], [2.0 / SQRT2, 1.0 / SQRT2]],
            stride: 16,
        }
    }
}

impl AnchorConfig {
    pub fn per_cell(&self) -> usize {
        self.scales.len() * self.ratios.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.per_cell() == 0 || self.stride == 0 {
            return Err(arg_err!("anchor config needs scales, ratios and a stride"));
        }
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !self.scales.iter().all(|&s| pos(s)) || !self.ratios.iter().flatten().all(|&r| pos(r)) {
            return Err(arg_err!("anchor scales and ratios must be positive"));
        }
        Ok(())
    }
}

/// Anchors tiled over a feature map. Box `((i·W + j)·A + a)` belongs to cell
/// `(i, j)` and shape `a = scale_index · |ratios| + ratio_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    pub feat_h: usize,
    pub feat_w: usize,
    pub stride: usize,
    pub per_cell: usize,
    pub boxes: Vec<BBox>,
}

impl AnchorSet {
    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    /// Image extent covered by the feature map.
    pub fn image_size(&self) -> (f64, f64) {
        ((self.feat_w * self.stride) as f64, (self.feat_h * self.stride) as f64)
    }

    /// Whether anchor `k` crosses the image boundary.
    pub fn crosses_boundary(&self, k: usize) -> bool {
        let (w, h) = self.image_size();
        !self.boxes[k].inside(w, h)
    }

    /// Splits a flat anchor index into `(a, i, j)`.
    pub fn unravel(&self, k: usize) -> (usize, usize, usize) {
        let a = k % self.per_cell;
        let cell = k / self.per_cell;
        (a, cell / self.feat_w, cell % self.feat_w)
    }
}

pub fn generate_anchors(feat_h: usize, feat_w: usize, cfg: &AnchorConfig) -> AnchorSet {
    let s = cfg.stride as f64;
    let mut boxes = Vec::with_capacity(feat_h * feat_w * cfg.per_cell());
    for i in 0..feat_h {
        for j in 0..feat_w {
            let (cx, cy) = ((j as f64 + 0.5) * s, (i as f64 + 0.5) * s);
            for &scale in &cfg.scales {
                for r in &cfg.ratios {
                    boxes.push(BBox::from_center(cx, cy, scale * r[0], scale * r[1]));
                }
            }
        }
    }
    AnchorSet {
        feat_h,
        feat_w,
        stride: cfg.stride,
        per_cell: cfg.per_cell(),
        boxes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchor_shapes_and_areas() {
        let set = generate_anchors(2, 2, &AnchorConfig::default());
        assert_eq!(set.len(), 36);
        let first = set.boxes[0];
        assert_eq!((first.width(), first.height()), (32.0, 32.0));
        assert_eq!(first.center(), (8.0, 8.0));
        let tall = set.boxes[4];
        assert!((tall.width() - 45.255).abs() < 1e-3);
        assert!((tall.height() - 90.510).abs() < 1e-3);
        for (k, b) in set.boxes.iter().enumerate() {
            let scale = [32.0, 64.0, 128.0][(k % 9) / 3];
            assert!((b.area() - scale * scale).abs() < 1e-3);
        }
        assert_eq!(set.unravel(9 * 3 + 5), (5, 1, 1));
    }
}
