use crate::image::{BinaryMask, GrayImage};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OtsuResult {
    /// Pixels strictly above this value are foreground.
    pub threshold: u8,
    /// Set when every pixel falls in one histogram bin; the threshold is
    /// then 0 by convention.
    pub degenerate: bool,
}

/// Between-class variance `w0·w1·(μ0 − μ1)²` for class sizes and integer
/// intensity sums.
pub(crate) fn between_class_variance(n0: u64, s0: u64, n1: u64, s1: u64) -> f64 {
    if n0 == 0 || n1 == 0 {
        return 0.0;
    }
    let n = (n0 + n1) as f64;
    let (w0, w1) = (n0 as f64 / n, n1 as f64 / n);
    let d = s0 as f64 / n0 as f64 - s1 as f64 / n1 as f64;
    w0 * w1 * d * d
}

/// OTSU threshold over the rounded 256-bin histogram. The smallest
/// maximizing threshold wins ties.
pub fn otsu_threshold(img: &GrayImage) -> OtsuResult {
    let mut hist = [0u64; 256];
    for &v in img.pixels() {
        hist[math::roundf(v).clamp(0.0, 255.0) as usize] += 1;
    }
    let total: u64 = hist.iter().sum();
    let total_sum: u64 = hist.iter().enumerate().map(|(i, &c)| i as u64 * c).sum();
    if hist.iter().filter(|&&c| c > 0).count() <= 1 {
        return OtsuResult {
            threshold: 0,
            degenerate: true,
        };
    }
    let (mut n0, mut s0) = (0u64, 0u64);
    let (mut best_t, mut best_v) = (0usize, f64::NEG_INFINITY);
    for (t, &c) in hist.iter().enumerate() {
        n0 += c;
        s0 += t as u64 * c;
        let v = between_class_variance(n0, s0, total - n0, total_sum - s0);
        if v > best_v {
            best_v = v;
            best_t = t;
        }
    }
    OtsuResult {
        threshold: best_t as u8,
        degenerate: false,
    }
}

/// Foreground where the rounded pixel value exceeds `t`.
pub fn threshold_mask(img: &GrayImage, t: u8) -> BinaryMask {
    let bits = img
        .pixels()
        .iter()
        .map(|&v| math::roundf(v) > t as f32)
        .collect();
    BinaryMask::new(img.width(), img.height(), bits).expect("same dims")
}
