use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::morphology::{fill_holes, largest_component, morphology, MorphOp};
use super::threshold::{otsu_threshold, threshold_mask, OtsuResult};
use crate::error::{Error, Result};
use crate::image::{BinaryMask, GrayImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionConfig {
    /// Square structuring element of the opening.
    pub morph_k: usize,
    /// Pixels added around the mask bounding box, clamped to the image.
    pub margin: usize,
}

impl Default for RegionConfig {
    fn default() -> Self {
        Self {
            morph_k: 5,
            margin: 8,
        }
    }
}

/// Half-open pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl CropBox {
    pub fn full(w: usize, h: usize) -> Self {
        Self {
            x0: 0,
            y0: 0,
            x1: w,
            y1: h,
        }
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }
}

#[derive(Debug, Clone)]
pub struct BreastRegion {
    /// Masked image cropped to `crop`; background pixels are 0.
    pub image: GrayImage,
    /// Single-component breast mask in source-image coordinates.
    pub mask: BinaryMask,
    pub crop: CropBox,
    pub otsu: OtsuResult,
}

/// OTSU threshold → opening → largest component → hole filling → mask →
/// crop.
pub fn extract_breast_region(img: &GrayImage, cfg: &RegionConfig) -> Result<BreastRegion> {
    let otsu = otsu_threshold(img);
    let raw = threshold_mask(img, otsu.threshold);
    let opened = morphology(&raw, MorphOp::Open, cfg.morph_k)?;
    let mask = fill_holes(&largest_component(&opened));
    let Some((bx0, by0, bx1, by1)) = mask.bounding_box() else {
        return Err(Error::NoForeground);
    };
    let (w, h) = (img.width(), img.height());
    let crop = CropBox {
        x0: bx0.saturating_sub(cfg.margin),
        y0: by0.saturating_sub(cfg.margin),
        x1: (bx1 + cfg.margin).min(w),
        y1: (by1 + cfg.margin).min(h),
    };
    let mut px = Vec::with_capacity(crop.width() * crop.height());
    for y in crop.y0..crop.y1 {
        for x in crop.x0..crop.x1 {
            px.push(if mask.get(x, y) { img.get(x, y) } else { 0.0 });
        }
    }
    Ok(BreastRegion {
        image: GrayImage::new(crop.width(), crop.height(), px)?,
        mask,
        crop,
        otsu,
    })
}
