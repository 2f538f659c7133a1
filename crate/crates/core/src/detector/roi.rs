use alloc::vec;
use alloc::vec::Vec;

use super::bbox::BBox;
use crate::error::{arg_err, shape_err, Error, Result};
use crate::math;
use crate::tensor::Tensor;

/// Flat feature index selected by each pooled output.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiPoolIndices {
    pub feature_shape: [usize; 3],
    pub argmax: Vec<u32>,
}

/// Feature-cell range `[start, end)` covered by an image-space interval.
fn project(lo: f64, hi: f64, stride: usize, n: usize) -> (usize, usize) {
    let s = stride as f64;
    let start = math::floor(lo / s).clamp(0.0, n as f64) as usize;
    let end = (-math::floor(-hi / s)).clamp(0.0, n as f64) as usize;
    (start, end)
}

/// Bin `i` of `bins` over a range of length `len`: floor start, ceil end,
/// at least one cell.
fn bin(i: usize, bins: usize, len: usize) -> (usize, usize) {
    let s = i * len / bins;
    let e = ((i + 1) * len).div_ceil(bins);
    (s, e.max(s + 1).min(len.max(s + 1)))
}

/// Max-pools the feature cells under `roi` (image coordinates) into an
/// `out × out` grid per channel.
pub fn roi_pool(features: &Tensor, roi: &BBox, stride: usize, out: usize) -> Result<(Tensor, RoiPoolIndices)> {
    let (c, h, w) = features.dims3()?;
    if out == 0 || stride == 0 {
        return Err(arg_err!("roi pool size and stride must be positive"));
    }
    if !roi.is_valid() {
        return Err(shape_err!("roi {roi:?} has no area"));
    }
    let (x0, x1) = project(roi.x1, roi.x2, stride, w);
    let (y0, y1) = project(roi.y1, roi.y2, stride, h);
    if x1 <= x0 || y1 <= y0 {
        return Err(Error::RoiOutside);
    }
    let (rw, rh) = (x1 - x0, y1 - y0);
    let f = features.data();
    let mut vals = vec![0.0f32; c * out * out];
    let mut argmax = vec![0u32; c * out * out];
    for ch in 0..c {
        let plane = ch * h * w;
        for by in 0..out {
            let (ys, ye) = bin(by, out, rh);
            for bx in 0..out {
                let (xs, xe) = bin(bx, out, rw);
                let mut best = f32::NEG_INFINITY;
                let mut best_i = 0usize;
                for y in y0 + ys..y0 + ye {
                    for x in x0 + xs..x0 + xe {
                        let i = plane + y * w + x;
                        if f[i] > best {
                            best = f[i];
                            best_i = i;
                        }
                    }
                }
                let o = (ch * out + by) * out + bx;
                vals[o] = best;
                argmax[o] = best_i as u32;
            }
        }
    }
    Ok((
        Tensor::new(&[c, out, out], vals)?,
        RoiPoolIndices {
            feature_shape: [c, h, w],
            argmax,
        },
    ))
}

/// Adds the pooled gradient back onto the selected feature cells.
pub fn roi_pool_backward(idx: &RoiPoolIndices, grad_out: &[f32], grad_features: &mut [f32]) -> Result<()> {
    let [c, h, w] = idx.feature_shape;
    if grad_out.len() != idx.argmax.len() || grad_features.len() != c * h * w {
        return Err(shape_err!("roi pool backward size mismatch"));
    }
    for (&i, &g) in idx.argmax.iter().zip(grad_out) {
        grad_features[i as usize] += g;
    }
    Ok(())
}
