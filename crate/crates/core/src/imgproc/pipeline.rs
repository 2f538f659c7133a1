use serde::{Deserialize, Serialize};

use super::clahe::{clahe, ClaheConfig};
use super::filters::FilterConfig;
use super::region::{extract_breast_region, CropBox, RegionConfig};
use super::resize::{letterbox, Letterbox};
use super::threshold::OtsuResult;
use crate::error::Result;
use crate::image::GrayImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub denoise: FilterConfig,
    /// `None` skips contrast enhancement.
    pub clahe: Option<ClaheConfig>,
    /// When false the whole image is kept and no threshold is computed.
    pub extract_region: bool,
    pub region: RegionConfig,
    /// Letterbox canvas `(width, height)`; `None` keeps the cropped size.
    pub target: Option<(usize, usize)>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            denoise: FilterConfig::median(3),
            clahe: Some(ClaheConfig::default()),
            extract_region: true,
            region: RegionConfig::default(),
            target: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub image: GrayImage,
    /// Crop in source pixel coordinates.
    pub crop: CropBox,
    pub letterbox: Option<Letterbox>,
    pub otsu: Option<OtsuResult>,
    pub mask_area: usize,
    pub filter_used: FilterConfig,
}

impl Preprocessed {
    /// Maps a source-image box `[x0, y0, x1, y1]` into output coordinates.
    pub fn box_to_output(&self, b: [f64; 4]) -> [f64; 4] {
        let (ox, oy) = (self.crop.x0 as f64, self.crop.y0 as f64);
        let s = self.letterbox.map_or(1.0, |l| l.scale);
        [(b[0] - ox) * s, (b[1] - oy) * s, (b[2] - ox) * s, (b[3] - oy) * s]
    }

    /// Inverse of [`Self::box_to_output`].
    pub fn box_to_source(&self, b: [f64; 4]) -> [f64; 4] {
        let (ox, oy) = (self.crop.x0 as f64, self.crop.y0 as f64);
        let s = self.letterbox.map_or(1.0, |l| l.scale);
        [b[0] / s + ox, b[1] / s + oy, b[2] / s + ox, b[3] / s + oy]
    }
}

/// Denoise → CLAHE → breast region crop → optional letterbox.
#[derive(Debug, Clone, Default)]
pub struct Preprocessor {
    pub config: PreprocessConfig,
}

impl Preprocessor {
    pub fn new(config: PreprocessConfig) -> Self {
        Self { config }
    }

    pub fn run(&self, img: &GrayImage) -> Result<Preprocessed> {
        let cfg = &self.config;
        let mut cur = cfg.denoise.apply(img)?;
        if let Some(c) = cfg.clahe {
            cur = clahe(&cur, c.clip_limit, c.tiles)?;
        }
        let (mut image, crop, otsu, mask_area) = if cfg.extract_region {
            let r = extract_breast_region(&cur, &cfg.region)?;
            let area = r.mask.area();
            (r.image, r.crop, Some(r.otsu), area)
        } else {
            let (w, h) = (cur.width(), cur.height());
            (cur, CropBox::full(w, h), None, w * h)
        };
        let mut lb = None;
        if let Some((w, h)) = cfg.target {
            let (canvas, l) = letterbox(&image, w, h)?;
            image = canvas;
            lb = Some(l);
        }
        Ok(Preprocessed {
            image,
            crop,
            letterbox: lb,
            otsu,
            mask_area,
            filter_used: cfg.denoise,
        })
    }
}
