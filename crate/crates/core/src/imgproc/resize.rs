use alloc::vec;

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};
use crate::image::GrayImage;
use crate::math;

/// Bilinear resampling with pixel-centre alignment.
pub fn resize_bilinear(img: &GrayImage, out_w: usize, out_h: usize) -> Result<GrayImage> {
    if out_w == 0 || out_h == 0 {
        return Err(arg_err!("resize target must be positive"));
    }
    let (w, h) = (img.width(), img.height());
    let sx = w as f64 / out_w as f64;
    let sy = h as f64 / out_h as f64;
    let mut out = vec![0.0f32; out_w * out_h];
    for oy in 0..out_h {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = math::floor(fy) as usize;
        let y1 = (y0 + 1).min(h - 1);
        let ty = fy - y0 as f64;
        for ox in 0..out_w {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = math::floor(fx) as usize;
            let x1 = (x0 + 1).min(w - 1);
            let tx = fx - x0 as f64;
            let top = img.get(x0, y0) as f64 * (1.0 - tx) + img.get(x1, y0) as f64 * tx;
            let bot = img.get(x0, y1) as f64 * (1.0 - tx) + img.get(x1, y1) as f64 * tx;
            out[oy * out_w + ox] = (top * (1.0 - ty) + bot * ty) as f32;
        }
    }
    GrayImage::from_clamped(out_w, out_h, out)
}

/// Aspect-preserving placement of an image in the top-left corner of a
/// fixed canvas, zero padded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Letterbox {
    /// Canvas pixels per source pixel.
    pub scale: f64,
    pub src_w: usize,
    pub src_h: usize,
    pub dst_w: usize,
    pub dst_h: usize,
}

impl Letterbox {
    pub fn new(src_w: usize, src_h: usize, dst_w: usize, dst_h: usize) -> Self {
        let scale = (dst_w as f64 / src_w as f64).min(dst_h as f64 / src_h as f64);
        Self {
            scale,
            src_w,
            src_h,
            dst_w,
            dst_h,
        }
    }

    /// Size of the resized content inside the canvas.
    pub fn content_size(&self) -> (usize, usize) {
        let cw = (math::roundf((self.src_w as f64 * self.scale) as f32) as usize).clamp(1, self.dst_w);
        let ch = (math::roundf((self.src_h as f64 * self.scale) as f32) as usize).clamp(1, self.dst_h);
        (cw, ch)
    }

    pub fn to_canvas(&self, x: f64, y: f64) -> (f64, f64) {
        (x * self.scale, y * self.scale)
    }

    pub fn to_source(&self, x: f64, y: f64) -> (f64, f64) {
        (x / self.scale, y / self.scale)
    }
}

pub fn letterbox(img: &GrayImage, dst_w: usize, dst_h: usize) -> Result<(GrayImage, Letterbox)> {
    let lb = Letterbox::new(img.width(), img.height(), dst_w, dst_h);
    let (cw, ch) = lb.content_size();
    let resized = resize_bilinear(img, cw, ch)?;
    let mut canvas = GrayImage::filled(dst_w, dst_h, 0.0)?;
    for y in 0..ch {
        for x in 0..cw {
            canvas.set(x, y, resized.get(x, y));
        }
    }
    Ok((canvas, lb))
}
