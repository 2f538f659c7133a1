use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};
use crate::image::GrayImage;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClaheConfig {
    /// Histogram clip height as a multiple of the uniform bin height.
    pub clip_limit: f32,
    /// Tile grid `(columns, rows)`.
    pub tiles: (usize, usize),
}

impl Default for ClaheConfig {
    fn default() -> Self {
        Self {
            clip_limit: 2.0,
            tiles: (8, 8),
        }
    }
}

#[inline]
fn bin(v: f32) -> usize {
    math::roundf(v).clamp(0.0, 255.0) as usize
}

/// Tile boundaries `floor(k·n/t)` for `k = 0..=t`.
fn edges(n: usize, t: usize) -> Vec<usize> {
    (0..=t).map(|k| k * n / t).collect()
}

fn check(img: &GrayImage, clip_limit: f32, tiles: (usize, usize)) -> Result<()> {
    let (tx, ty) = tiles;
    if tx == 0 || ty == 0 {
        return Err(arg_err!("CLAHE needs at least one tile per axis"));
    }
    if tx > img.width() || ty > img.height() {
        return Err(arg_err!(
            "CLAHE grid {tx}x{ty} larger than {}x{} image",
            img.width(),
            img.height()
        ));
    }
    if !(clip_limit >= 1.0) {
        return Err(arg_err!("CLAHE clip limit must be >= 1, got {clip_limit}"));
    }
    Ok(())
}

/// Intensity lookup table of every tile, row-major over the grid.
///
/// Each tile histogram is clipped at `clip_limit · count / 256`, the clipped
/// mass is spread evenly across all 256 bins, and the mapping is
/// `255 · cdf(v) / count`.
pub fn clahe_tile_luts(
    img: &GrayImage,
    clip_limit: f32,
    tiles: (usize, usize),
) -> Result<Vec<[f32; 256]>> {
    check(img, clip_limit, tiles)?;
    let (tx, ty) = tiles;
    let xe = edges(img.width(), tx);
    let ye = edges(img.height(), ty);
    let mut luts = Vec::with_capacity(tx * ty);
    for j in 0..ty {
        for i in 0..tx {
            let mut hist = [0.0f64; 256];
            for y in ye[j]..ye[j + 1] {
                for x in xe[i]..xe[i + 1] {
                    hist[bin(img.get(x, y))] += 1.0;
                }
            }
            let count = ((xe[i + 1] - xe[i]) * (ye[j + 1] - ye[j])) as f64;
            let limit = clip_limit as f64 * count / 256.0;
            if limit.is_finite() {
                let mut excess = 0.0;
                for h in hist.iter_mut() {
                    if *h > limit {
                        excess += *h - limit;
                        *h = limit;
                    }
                }
                let share = excess / 256.0;
                hist.iter_mut().for_each(|h| *h += share);
            }
            let mut lut = [0.0f32; 256];
            let mut cdf = 0.0;
            for (v, h) in hist.iter().enumerate() {
                cdf += h;
                lut[v] = (255.0 * cdf / count).clamp(0.0, 255.0) as f32;
            }
            luts.push(lut);
        }
    }
    Ok(luts)
}

/// Lower tile index and blend weight toward the next tile for coordinate
/// `p`, interpolating between tile centres.
fn locate(p: usize, e: &[usize]) -> (usize, usize, f64) {
    let t = e.len() - 1;
    let pc = p as f64 + 0.5;
    let center = |k: usize| (e[k] + e[k + 1]) as f64 / 2.0;
    if pc <= center(0) {
        return (0, 0, 0.0);
    }
    if pc >= center(t - 1) {
        return (t - 1, t - 1, 0.0);
    }
    let mut k = 0;
    while center(k + 1) < pc {
        k += 1;
    }
    let (c0, c1) = (center(k), center(k + 1));
    (k, k + 1, (pc - c0) / (c1 - c0))
}

/// Contrast-limited adaptive histogram equalization with bilinear blending
/// of neighbouring tile mappings.
pub fn clahe(img: &GrayImage, clip_limit: f32, tiles: (usize, usize)) -> Result<GrayImage> {
    let luts = clahe_tile_luts(img, clip_limit, tiles)?;
    let (tx, ty) = tiles;
    let (w, h) = (img.width(), img.height());
    let xe = edges(w, tx);
    let ye = edges(h, ty);
    let xs: Vec<_> = (0..w).map(|x| locate(x, &xe)).collect();
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        let (j0, j1, fy) = locate(y, &ye);
        for x in 0..w {
            let (i0, i1, fx) = xs[x];
            let b = bin(img.get(x, y));
            let v = |i: usize, j: usize| luts[j * tx + i][b] as f64;
            let top = v(i0, j0) * (1.0 - fx) + v(i1, j0) * fx;
            let bot = v(i0, j1) * (1.0 - fx) + v(i1, j1) * fx;
            out[y * w + x] = (top * (1.0 - fy) + bot * fy) as f32;
        }
    }
    GrayImage::from_clamped(w, h, out)
}
